//! The Legendre transform potential `ψ(s, x) = (u0 + s·u̇0)*(x)` and what is
//! read off from it: `φ_s = ψ_s − ψ0`, maximizer sets, singular locus and the
//! Monge-Ampère residual.

use std::sync::OnceLock;

use crate::convex::{
    convex_lifespan, legendre_search, min_hessian_eigenvalue, LegendreOptions, LegendreSearch, Lifespan, LifespanGrid,
    MaximizerSet,
};
use crate::error::{check_dim, Error, Result};
use crate::field::{PathField, Polynomial, PotentialField, ScalarField};
use crate::numerics::fd::fd_hessian;
use crate::numerics::linalg::{distance, norm};
use crate::polytope::DelzantPolytope;
use crate::Real;

/// Cauchy data `(u0, u̇0)` on a Delzant polytope.
#[derive(Debug)]
pub struct ProblemData<T> {
    u0: PotentialField<T>,
    udot0: PotentialField<T>,
    lifespan: OnceLock<Lifespan<T>>,
}

impl<T: Real> Clone for ProblemData<T> {
    fn clone(&self) -> Self {
        let lifespan = OnceLock::new();
        if let Some(l) = self.lifespan.get() {
            let _ = lifespan.set(l.clone());
        }
        Self {
            u0: self.u0.clone(),
            udot0: self.udot0.clone(),
            lifespan,
        }
    }
}

impl<T: Real> ProblemData<T> {
    /// Validates that both fields live on the same polytope, that `u̇0` is
    /// smooth up to `∂P` and that `u0` is strictly convex at sample points.
    pub fn new(u0: PotentialField<T>, udot0: PotentialField<T>) -> Result<Self> {
        if u0.polytope() != udot0.polytope() {
            return Err(Error::input("u0 and the velocity are defined on different polytopes"));
        }
        if !udot0.smooth_to_boundary() {
            return Err(Error::input("the velocity must be smooth up to the boundary"));
        }
        let p = u0.polytope();
        let c = p.centroid::<T>();
        let mut samples = vec![c.clone()];
        for v in p.vertices_real::<T>() {
            // points 90% of the way from the centroid to each vertex
            samples.push(v.iter().zip(&c).map(|(&a, &b)| b + T::lit(0.9) * (a - b)).collect());
        }
        for y in &samples {
            let lam = min_hessian_eigenvalue(&u0, y)?;
            if !(lam > T::zero()) {
                return Err(Error::Precondition(format!(
                    "u0 is not strictly convex at {y:?} (min eigenvalue {lam})"
                )));
            }
        }
        Ok(Self {
            u0,
            udot0,
            lifespan: OnceLock::new(),
        })
    }

    /// `u0 = u_G` and `u̇0 = y(1 − y)` on `[0, 1]`.
    pub fn flagship() -> Self {
        let seg = DelzantPolytope::segment();
        Self::new(
            PotentialField::guillemin(seg.clone()),
            PotentialField::smooth(seg, Polynomial::bump()).expect("bump velocity"),
        )
        .expect("flagship data")
    }

    pub fn polytope(&self) -> &DelzantPolytope {
        self.u0.polytope()
    }

    pub fn dim(&self) -> usize {
        self.polytope().dim()
    }

    pub fn u0(&self) -> &PotentialField<T> {
        &self.u0
    }

    pub fn udot0(&self) -> &PotentialField<T> {
        &self.udot0
    }

    /// `u0 + s·u̇0`
    pub fn path(&self, s: T) -> PathField<'_, T> {
        PathField {
            base: &self.u0,
            velocity: &self.udot0,
            s,
        }
    }

    /// Convex lifespan with the default sampling, computed once.
    pub fn lifespan(&self) -> Result<&Lifespan<T>> {
        if let Some(l) = self.lifespan.get() {
            return Ok(l);
        }
        let l = convex_lifespan(&self.u0, &self.udot0, &LifespanGrid::default())?;
        Ok(self.lifespan.get_or_init(|| l))
    }

    /// `max_{y∈P} |y|`, the Lipschitz constant of `ψ_s` in `x`.
    pub fn lipschitz_x(&self) -> T {
        self.polytope().max_norm()
    }

    /// `max_P |u̇0|` sampled on a grid plus the vertices; the Lipschitz
    /// constant of `ψ` in `s`.
    pub fn velocity_sup_norm(&self) -> Result<T> {
        let p = self.polytope();
        let n = p.dim();
        let res: usize = if n == 1 { 4097 } else { 257 };
        let (lo, hi) = p.bounding_box::<T>();
        let mut best = T::zero();
        for v in p.vertices_real::<T>() {
            best = best.max(self.udot0.value(&v)?.abs());
        }
        let mut y = vec![T::zero(); n];
        for flat in 0..res.pow(n as u32) {
            let mut f = flat;
            for d in 0..n {
                let t = T::from_usize(f % res).unwrap() / T::from_usize(res - 1).unwrap();
                f /= res;
                y[d] = lo[d] + t * (hi[d] - lo[d]);
            }
            if p.contains(&y) {
                best = best.max(self.udot0.value(&y)?.abs());
            }
        }
        Ok(best)
    }
}

/// `u̇0 = −φ̇0` in moment coordinates.
pub fn velocity_from_kahler_data<T: Real>(
    polytope: &DelzantPolytope,
    phidot0: &Polynomial<T>,
) -> Result<PotentialField<T>> {
    PotentialField::smooth(polytope.clone(), phidot0.scaled(-T::one()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayOptions {
    pub legendre: LegendreOptions,
    /// Diameter above which a maximizer set counts as singular; `None` uses
    /// ten coarse-grid spacings.
    pub singular_tol: Option<f64>,
    /// Relative finite-difference step, `h = fd_step·(1 + |x|)`.
    pub fd_step: f64,
}

impl Default for RayOptions {
    fn default() -> Self {
        Self {
            legendre: LegendreOptions::default(),
            singular_tol: None,
            fd_step: 1e-3,
        }
    }
}

/// Evaluator of `ψ(s, x)` for one problem.
#[derive(Clone, Debug)]
pub struct GeodesicRay<'a, T> {
    problem: &'a ProblemData<T>,
    options: RayOptions,
}

impl<'a, T: Real> GeodesicRay<'a, T> {
    pub fn new(problem: &'a ProblemData<T>) -> Self {
        Self::with_options(problem, RayOptions::default())
    }

    pub fn with_options(problem: &'a ProblemData<T>, options: RayOptions) -> Self {
        Self { problem, options }
    }

    pub fn problem(&self) -> &'a ProblemData<T> {
        self.problem
    }

    pub fn options(&self) -> &RayOptions {
        &self.options
    }

    fn check(&self, s: T, x: &[T]) -> Result<()> {
        check_dim(self.problem.dim(), x.len())?;
        if !(s >= T::zero()) || !s.is_finite() {
            return Err(Error::input(format!("time must be finite and nonnegative, got {s}")));
        }
        Ok(())
    }

    /// Full search result at `(s, x)`, including non-global local maxima.
    pub fn search(&self, s: T, x: &[T]) -> Result<LegendreSearch<T>> {
        self.check(s, x)?;
        legendre_search(&self.problem.path(s), x, &self.options.legendre)
    }

    pub fn psi(&self, s: T, x: &[T]) -> Result<(T, MaximizerSet<T>)> {
        let m = self.search(s, x)?.maximizers;
        Ok((m.value, m))
    }

    pub fn psi_value(&self, s: T, x: &[T]) -> Result<T> {
        Ok(self.search(s, x)?.maximizers.value)
    }

    /// `ψ0 = u0*`, with no additive normalization.
    pub fn psi0(&self, x: &[T]) -> Result<T> {
        self.psi_value(T::zero(), x)
    }

    /// `φ(s, x) = ψ(s, x) − ψ0(x)`
    pub fn phi(&self, s: T, x: &[T]) -> Result<T> {
        Ok(self.psi_value(s, x)? - self.psi0(x)?)
    }

    pub fn default_singular_tol(&self) -> T {
        match self.options.singular_tol {
            Some(t) => T::lit(t),
            None => T::lit(10.0) * self.options.legendre.spacing::<T>(self.problem.polytope()),
        }
    }

    /// Point `(−u̇0(y), y)` dual to `(s, x)` in the joint conjugation.
    fn joint_dual(&self, y: &[T]) -> Result<Vec<T>> {
        let mut p = Vec::with_capacity(y.len() + 1);
        p.push(-self.problem.udot0.value(y)?);
        p.extend_from_slice(y);
        Ok(p)
    }

    /// Whether the joint maximizer set at `(s, x)` has diameter above `tol`
    /// (default [`Self::default_singular_tol`]); returns the diameter too.
    pub fn singular_indicator(&self, s: T, x: &[T], tol: Option<T>) -> Result<(bool, T)> {
        let m = self.search(s, x)?.maximizers;
        let tol = tol.unwrap_or_else(|| self.default_singular_tol());
        let duals = m
            .points
            .iter()
            .map(|y| self.joint_dual(y))
            .collect::<Result<Vec<_>>>()?;
        let mut d = T::zero();
        for (i, a) in duals.iter().enumerate() {
            for b in &duals[i + 1..] {
                d = d.max(distance(a, b));
            }
        }
        Ok((d > tol, d))
    }

    /// Whether a kink of `ψ` lies within `radius` of `(s, x)`: some local
    /// maximizer `y'` separated from the global one by more than `tol` has a
    /// value gap at most `radius·|p(y) − p(y')|`, `p` the joint dual point.
    /// Moving `(s, x)` by `δ` changes that gap by at most `|δ|·|p − p'|`.
    pub fn singular_within(&self, s: T, x: &[T], radius: T, tol: Option<T>) -> Result<bool> {
        let found = self.search(s, x)?;
        let tol = tol.unwrap_or_else(|| self.default_singular_tol());
        let (top, v_top) = &found.local_maxima[0];
        let p_top = self.joint_dual(top)?;
        for (y, v) in &found.local_maxima[1..] {
            let p = self.joint_dual(y)?;
            let sep = distance(&p, &p_top);
            if sep > tol && *v_top - *v <= radius * sep {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Finite-difference step at `x`.
    pub fn default_step(&self, x: &[T]) -> T {
        T::lit(self.options.fd_step) * (T::one() + norm(x))
    }

    /// `det ∇²ψ` in `(s, x)` by central differences. When `s < h` the
    /// stencil is centred at `s = h` instead, which is an `O(h)` forward
    /// approximation at `s`.
    pub fn hrma_residual(&self, s: T, x: &[T], h: T) -> Result<T> {
        self.check(s, x)?;
        if !(h > T::zero()) {
            return Err(Error::input("finite-difference step must be positive"));
        }
        let n = x.len();
        let mut centre = Vec::with_capacity(n + 1);
        centre.push(s.max(h));
        centre.extend_from_slice(x);
        let hess = fd_hessian(|p: &[T]| self.psi_value(p[0], &p[1..]), &centre, h)?;
        Ok(hess.det())
    }
}
