//! Scalar fields on a polytope: symplectic potentials `u = u_G + F` and
//! velocities, with exact gradients and Hessians.

use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::Matrix;
use crate::polytope::{DelzantPolytope, MEMBERSHIP_TOL};
use crate::Real;

/// A function on `P` with value, gradient and Hessian.
///
/// `value` must be defined on all of `P`, using limits at `∂P` where the
/// formula is singular; derivatives are only required on the interior.
pub trait ScalarField<T: Real>: Send + Sync {
    fn domain(&self) -> &DelzantPolytope;

    fn value(&self, y: &[T]) -> Result<T>;

    fn gradient(&self, y: &[T]) -> Result<Vec<T>>;

    fn hessian(&self, y: &[T]) -> Result<Matrix<T>>;

    /// False when a Guillemin-type `l log l` part is present.
    fn smooth_to_boundary(&self) -> bool;

    fn dim(&self) -> usize {
        self.domain().dim()
    }
}

impl<T: Real, F: ScalarField<T> + ?Sized> ScalarField<T> for &F {
    fn domain(&self) -> &DelzantPolytope {
        (**self).domain()
    }
    fn value(&self, y: &[T]) -> Result<T> {
        (**self).value(y)
    }
    fn gradient(&self, y: &[T]) -> Result<Vec<T>> {
        (**self).gradient(y)
    }
    fn hessian(&self, y: &[T]) -> Result<Matrix<T>> {
        (**self).hessian(y)
    }
    fn smooth_to_boundary(&self) -> bool {
        (**self).smooth_to_boundary()
    }
}

/// Sparse multivariate polynomial `Σ c_k y^{e_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    dim: usize,
    terms: Vec<(Vec<u32>, T)>,
}

impl<T: Real> Polynomial<T> {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self::new(dim, vec![(vec![0; dim], c)]).expect("constant polynomial")
    }

    /// `⟨a, y⟩ + b`
    pub fn affine(a: &[T], b: T) -> Self {
        let dim = a.len();
        let mut terms = vec![(vec![0; dim], b)];
        for (i, &ai) in a.iter().enumerate() {
            let mut e = vec![0; dim];
            e[i] = 1;
            terms.push((e, ai));
        }
        Self::new(dim, terms).expect("affine polynomial")
    }

    /// Univariate polynomial from ascending coefficients `c_0 + c_1 y + …`.
    pub fn univariate(coefficients: &[T]) -> Self {
        let terms = coefficients
            .iter()
            .enumerate()
            .map(|(k, &c)| (vec![k as u32], c))
            .collect();
        Self::new(1, terms).expect("univariate polynomial")
    }

    /// `c · Π_j l_j(y)` is not needed; the bump `y(1 − y)` on the segment is.
    pub fn bump() -> Self {
        Self::univariate(&[T::zero(), T::one(), -T::one()])
    }

    pub fn new(dim: usize, terms: Vec<(Vec<u32>, T)>) -> Result<Self> {
        for (e, c) in &terms {
            check_dim(dim, e.len())?;
            if !c.is_finite() {
                return Err(Error::input(format!("non-finite polynomial coefficient {c}")));
            }
        }
        let mut p = Self { dim, terms };
        p.normalize();
        Ok(p)
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Vec<u32>, T)> = Vec::with_capacity(self.terms.len());
        for (e, c) in self.terms.drain(..) {
            match merged.last_mut() {
                Some((le, lc)) if *le == e => *lc += c,
                _ => merged.push((e, c)),
            }
        }
        merged.retain(|(_, c)| *c != T::zero());
        self.terms = merged;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<u32>, T)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Some(c)` for a constant polynomial.
    pub fn as_constant(&self) -> Option<T> {
        match self.terms.as_slice() {
            [] => Some(T::zero()),
            [(e, c)] if e.iter().all(|&k| k == 0) => Some(*c),
            _ => None,
        }
    }

    pub fn scaled(&self, w: T) -> Self {
        let mut p = self.clone();
        for (_, c) in &mut p.terms {
            *c *= w;
        }
        p.normalize();
        p
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(self.dim, terms)
    }

    pub fn eval(&self, y: &[T]) -> T {
        self.terms.iter().fold(T::zero(), |acc, (e, c)| {
            acc + *c * e.iter().zip(y).fold(T::one(), |m, (&k, &yi)| m * yi.powi(k as i32))
        })
    }

    pub fn eval_gradient(&self, y: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim];
        for (e, c) in &self.terms {
            for i in 0..self.dim {
                if e[i] == 0 {
                    continue;
                }
                let mut m = *c * T::from_u32(e[i]).unwrap();
                for (j, (&k, &yj)) in e.iter().zip(y).enumerate() {
                    let p = if j == i { k - 1 } else { k };
                    m *= yj.powi(p as i32);
                }
                g[i] += m;
            }
        }
        g
    }

    pub fn eval_hessian(&self, y: &[T]) -> Matrix<T> {
        let mut h = Matrix::zeros(self.dim);
        for (e, c) in &self.terms {
            for i in 0..self.dim {
                for j in i..self.dim {
                    let mut ex = e.clone();
                    let mut m = *c;
                    if ex[i] == 0 {
                        continue;
                    }
                    m *= T::from_u32(ex[i]).unwrap();
                    ex[i] -= 1;
                    if ex[j] == 0 {
                        continue;
                    }
                    m *= T::from_u32(ex[j]).unwrap();
                    ex[j] -= 1;
                    let v = ex.iter().zip(y).fold(m, |acc, (&k, &yk)| acc * yk.powi(k as i32));
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        h
    }
}

/// `u = w·u_G + F` on `P`, where `w ∈ {0, 1}` switches the Guillemin part and
/// `F` is a polynomial (smooth up to `∂P`).
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField<T> {
    polytope: DelzantPolytope,
    guillemin: bool,
    smooth: Polynomial<T>,
}

impl<T: Real> PotentialField<T> {
    /// `u_G + F`
    pub fn symplectic(polytope: DelzantPolytope, smooth: Polynomial<T>) -> Result<Self> {
        check_dim(polytope.dim(), smooth.dim())?;
        Ok(Self {
            polytope,
            guillemin: true,
            smooth,
        })
    }

    pub fn guillemin(polytope: DelzantPolytope) -> Self {
        let n = polytope.dim();
        Self {
            polytope,
            guillemin: true,
            smooth: Polynomial::zero(n),
        }
    }

    /// A field with no Guillemin part.
    pub fn smooth(polytope: DelzantPolytope, smooth: Polynomial<T>) -> Result<Self> {
        check_dim(polytope.dim(), smooth.dim())?;
        Ok(Self {
            polytope,
            guillemin: false,
            smooth,
        })
    }

    pub fn has_guillemin(&self) -> bool {
        self.guillemin
    }

    pub fn smooth_part(&self) -> &Polynomial<T> {
        &self.smooth
    }

    pub fn polytope(&self) -> &DelzantPolytope {
        &self.polytope
    }

    fn facet_values_checked(&self, y: &[T]) -> Result<Vec<T>> {
        let l = self.polytope.facet_values(y)?;
        let tol = T::lit(MEMBERSHIP_TOL);
        for (j, (&lj, &lam)) in l.iter().zip(self.polytope.offsets()).enumerate() {
            if lj < -tol * (T::one() + T::from_int(lam.abs())) || lj.is_nan() {
                return Err(Error::domain(format!("point outside P: facet {j} has value {lj}")));
            }
        }
        Ok(l)
    }

    fn require_interior(&self, y: &[T]) -> Result<()> {
        if self.guillemin && !self.polytope.contains_strictly(y) {
            return Err(Error::domain(
                "derivatives of the Guillemin part need an interior point",
            ));
        }
        Ok(())
    }
}

impl<T: Real> ScalarField<T> for PotentialField<T> {
    fn domain(&self) -> &DelzantPolytope {
        &self.polytope
    }

    fn value(&self, y: &[T]) -> Result<T> {
        let mut v = self.smooth.eval(y);
        if self.guillemin {
            for lj in self.facet_values_checked(y)? {
                if lj > T::zero() {
                    v += lj * lj.ln();
                }
            }
        } else {
            check_dim(self.polytope.dim(), y.len())?;
        }
        Ok(v)
    }

    fn gradient(&self, y: &[T]) -> Result<Vec<T>> {
        check_dim(self.polytope.dim(), y.len())?;
        let mut g = self.smooth.eval_gradient(y);
        if self.guillemin {
            self.require_interior(y)?;
            let (_, gg, _) = self.polytope.guillemin(y)?;
            for (a, b) in g.iter_mut().zip(gg) {
                *a += b;
            }
        }
        Ok(g)
    }

    fn hessian(&self, y: &[T]) -> Result<Matrix<T>> {
        check_dim(self.polytope.dim(), y.len())?;
        let mut h = self.smooth.eval_hessian(y);
        if self.guillemin {
            self.require_interior(y)?;
            let (_, _, hg) = self.polytope.guillemin(y)?;
            h = h.axpy(T::one(), &hg);
        }
        Ok(h)
    }

    fn smooth_to_boundary(&self) -> bool {
        !self.guillemin
    }
}

/// `u_s = u0 + s·u̇0`, evaluated without materializing the sum.
#[derive(Clone, Copy, Debug)]
pub struct PathField<'a, T> {
    pub base: &'a PotentialField<T>,
    pub velocity: &'a PotentialField<T>,
    pub s: T,
}

impl<'a, T: Real> ScalarField<T> for PathField<'a, T> {
    fn domain(&self) -> &DelzantPolytope {
        self.base.domain()
    }

    fn value(&self, y: &[T]) -> Result<T> {
        Ok(self.base.value(y)? + self.s * self.velocity.value(y)?)
    }

    fn gradient(&self, y: &[T]) -> Result<Vec<T>> {
        let mut g = self.base.gradient(y)?;
        for (a, b) in g.iter_mut().zip(self.velocity.gradient(y)?) {
            *a += self.s * b;
        }
        Ok(g)
    }

    fn hessian(&self, y: &[T]) -> Result<Matrix<T>> {
        Ok(self.base.hessian(y)?.axpy(self.s, &self.velocity.hessian(y)?))
    }

    fn smooth_to_boundary(&self) -> bool {
        self.base.smooth_to_boundary() && self.velocity.smooth_to_boundary()
    }
}
