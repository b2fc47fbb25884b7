//! Numerical Legendre-Fenchel transforms over a polytope, convexity tests and
//! the convex lifespan of a pair `(u0, u̇0)`.

use crate::error::{check_dim, Error, Result};
use crate::field::ScalarField;
use crate::numerics::fd::fd_gradient;
use crate::numerics::linalg::{distance, dot, norm, Matrix};
use crate::polytope::DelzantPolytope;
use crate::Real;

/// Knobs for [`legendre_search`].
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreOptions {
    /// Coarse grid points per coordinate of the bounding box; `0` picks a
    /// dimension-dependent default.
    pub grid_per_dim: usize,
    pub tie_abs: f64,
    pub tie_rel: f64,
    pub merge_radius: f64,
    pub max_candidates: usize,
    pub newton_iterations: usize,
}

impl Default for LegendreOptions {
    fn default() -> Self {
        Self {
            grid_per_dim: 0,
            tie_abs: 1e-10,
            tie_rel: 1e-8,
            merge_radius: 1e-6,
            max_candidates: 16,
            newton_iterations: 60,
        }
    }
}

impl LegendreOptions {
    pub fn with_grid(grid_per_dim: usize) -> Self {
        Self {
            grid_per_dim,
            ..Self::default()
        }
    }

    pub fn resolved_grid(&self, dim: usize) -> usize {
        if self.grid_per_dim >= 2 {
            return self.grid_per_dim;
        }
        match dim {
            1 => 2048,
            2 => 256,
            _ => 24,
        }
    }

    /// Coarse-grid spacing along the widest axis of `P`.
    pub fn spacing<T: Real>(&self, polytope: &DelzantPolytope) -> T {
        let (lo, hi) = polytope.bounding_box::<T>();
        let w = lo.iter().zip(&hi).fold(T::zero(), |m, (&a, &b)| m.max(b - a));
        w / T::from_usize(self.resolved_grid(polytope.dim()) - 1).unwrap()
    }

    fn tie_tolerance<T: Real>(&self, value: T) -> T {
        T::lit(self.tie_abs).max(T::lit(self.tie_rel) * value.abs())
    }
}

/// Points of `P` attaining a Legendre supremum.
#[derive(Clone, Debug, PartialEq)]
pub struct MaximizerSet<T> {
    pub points: Vec<Vec<T>>,
    pub value: T,
    pub diameter: T,
}

impl<T: Real> MaximizerSet<T> {
    pub fn is_unique(&self) -> bool {
        self.points.len() == 1
    }
}

/// Output of [`legendre_search`]: the maximizer set plus every distinct
/// refined local maximum, sorted by decreasing value.
#[derive(Clone, Debug)]
pub struct LegendreSearch<T> {
    pub maximizers: MaximizerSet<T>,
    pub local_maxima: Vec<(Vec<T>, T)>,
}

/// `sup_{y∈P} ⟨x,y⟩ − g(y)` and its maximizers.
pub fn legendre_search<T, G>(g: &G, x: &[T], opts: &LegendreOptions) -> Result<LegendreSearch<T>>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
{
    let p = g.domain();
    let n = p.dim();
    check_dim(n, x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite Legendre argument"));
    }
    let objective = |y: &[T]| -> Result<T> {
        let v = dot(x, y) - g.value(y)?;
        if !v.is_finite() {
            return Err(Error::numerical(format!("non-finite objective {v} at {y:?}")));
        }
        Ok(v)
    };

    let res = opts.resolved_grid(n);
    let (lo, hi) = p.bounding_box::<T>();
    let step: Vec<T> = lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| (b - a) / T::from_usize(res - 1).unwrap())
        .collect();
    let spacing = step.iter().fold(T::zero(), |m, &s| m.max(s));

    // coarse scan; `None` marks nodes outside P
    let total = res.pow(n as u32);
    let mut values: Vec<Option<T>> = Vec::with_capacity(total);
    let mut y = vec![T::zero(); n];
    for flat in 0..total {
        node(flat, res, &lo, &hi, &step, &mut y);
        values.push(if p.contains(&y) { Some(objective(&y)?) } else { None });
    }

    let mut candidates: Vec<(usize, T)> = Vec::new();
    let mut idx = vec![0usize; n];
    for flat in 0..total {
        let Some(v) = values[flat] else { continue };
        unflatten(flat, res, &mut idx);
        if is_local_max(&values, &idx, res, v) {
            candidates.push((flat, v));
        }
    }
    if candidates.is_empty() {
        return Err(Error::numerical("Legendre grid scan found no admissible node"));
    }
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    candidates.truncate(opts.max_candidates.max(1));

    let mut refined: Vec<(Vec<T>, T)> = Vec::with_capacity(candidates.len());
    for &(flat, v) in &candidates {
        node(flat, res, &lo, &hi, &step, &mut y);
        let (yr, vr) = refine(g, x, &y, v, spacing, opts, &objective)?;
        refined.push((yr, vr));
    }

    // merge duplicates, keeping the better representative
    refined.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let merge = T::lit(opts.merge_radius);
    let mut distinct: Vec<(Vec<T>, T)> = Vec::new();
    for (yr, vr) in refined {
        if distinct.iter().all(|(d, _)| distance(d, &yr) > merge) {
            distinct.push((yr, vr));
        }
    }
    let value = distinct[0].1;
    let tie = opts.tie_tolerance(value);
    let points: Vec<Vec<T>> = distinct
        .iter()
        .filter(|(_, v)| value - *v <= tie)
        .map(|(y, _)| y.clone())
        .collect();
    let diameter = diameter_of(&points);
    Ok(LegendreSearch {
        maximizers: MaximizerSet {
            points,
            value,
            diameter,
        },
        local_maxima: distinct,
    })
}

/// As [`legendre_search`] with default options and tie tolerance `tol`.
pub fn legendre_on_polytope<T, G>(g: &G, x: &[T], tol: T) -> Result<MaximizerSet<T>>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
{
    let opts = LegendreOptions {
        tie_abs: tol.as_f64(),
        ..LegendreOptions::default()
    };
    Ok(legendre_search(g, x, &opts)?.maximizers)
}

/// `ψ(x) = u*(x)`
pub fn kahler_potential<T, G>(u: &G, x: &[T]) -> Result<T>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
{
    Ok(legendre_search(u, x, &LegendreOptions::default())?.maximizers.value)
}

/// `|∇ψ(∇u(y)) − y|` with `∇ψ` from central differences of the conjugate.
pub fn dual_gradient_check<T, G>(u: &G, y: &[T]) -> Result<T>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
{
    dual_gradient_check_with(u, y, &LegendreOptions::default())
}

pub fn dual_gradient_check_with<T, G>(u: &G, y: &[T], opts: &LegendreOptions) -> Result<T>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
{
    let xs = u.gradient(y)?;
    let h = T::lit(1e-5) * (T::one() + norm(&xs));
    let grad = fd_gradient(|x: &[T]| Ok(legendre_search(u, x, opts)?.maximizers.value), &xs, h)?;
    Ok(distance(&grad, y))
}

/// Smallest eigenvalue of the Hessian of `g` at `y`.
pub fn min_hessian_eigenvalue<T, G>(g: &G, y: &[T]) -> Result<T>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
{
    let h = g.hessian(y)?;
    let asym = h.asymmetry();
    if asym > T::lit(1e-9) * (T::one() + h.max_abs()) {
        return Err(Error::Consistency(format!("Hessian asymmetry {asym} at {y:?}")));
    }
    Ok(h.symmetric_eigenvalues()[0])
}

/// Sampling of the interior used by [`convex_lifespan`].
#[derive(Clone, Debug, PartialEq)]
pub struct LifespanGrid {
    /// Points per coordinate of the coarse scan.
    pub resolution: usize,
    /// Width at which the zoom refinement of the argmin stops.
    pub refine_width: f64,
}

impl Default for LifespanGrid {
    fn default() -> Self {
        Self {
            resolution: 512,
            refine_width: 1e-11,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lifespan<T> {
    /// `+∞` when no sample point binds.
    pub time: T,
    pub binding_point: Option<Vec<T>>,
}

impl<T: Real> Lifespan<T> {
    pub fn is_infinite(&self) -> bool {
        self.time.is_infinite()
    }
}

/// `sup{s ≥ 0 : H_{u0}(y) + s·H_{u̇0}(y) ⪰ 0}` at one point.
pub fn s_max<T, A, B>(u0: &A, udot0: &B, y: &[T]) -> Result<T>
where
    T: Real,
    A: ScalarField<T> + ?Sized,
    B: ScalarField<T> + ?Sized,
{
    let h0 = u0.hessian(y)?;
    let h1 = udot0.hessian(y)?.scale(-T::one());
    let lam = Matrix::generalized_max_eigenvalue(&h0, &h1)
        .ok_or_else(|| Error::Precondition(format!("u0 is not strictly convex at {y:?}")))?;
    let floor = T::lit(1e-14) * (T::one() + h1.max_abs());
    Ok(if lam > floor { T::one() / lam } else { T::infinity() })
}

/// Convex lifespan of `u0 + s·u̇0`: coarse scan of the interior minus a collar
/// of width `1/(4·resolution)`, then zoom refinement around the argmin.
pub fn convex_lifespan<T, A, B>(u0: &A, udot0: &B, grid: &LifespanGrid) -> Result<Lifespan<T>>
where
    T: Real,
    A: ScalarField<T> + ?Sized,
    B: ScalarField<T> + ?Sized,
{
    let p = u0.domain();
    let n = p.dim();
    check_dim(n, udot0.dim())?;
    let res = grid.resolution.max(2);
    let (lo, hi) = p.bounding_box::<T>();
    let collar = T::one() / T::from_usize(4 * res).unwrap();
    let lo_in: Vec<T> = lo.iter().zip(&hi).map(|(&a, &b)| a + collar * (b - a)).collect();
    let hi_in: Vec<T> = lo.iter().zip(&hi).map(|(&a, &b)| b - collar * (b - a)).collect();
    let step: Vec<T> = lo_in
        .iter()
        .zip(&hi_in)
        .map(|(&a, &b)| (b - a) / T::from_usize(res - 1).unwrap())
        .collect();
    let width = lo.iter().zip(&hi).fold(T::zero(), |m, (&a, &b)| m.max(b - a));
    let min_dist = collar * width;

    let mut best: Option<(T, Vec<T>)> = None;
    let mut y = vec![T::zero(); n];
    for flat in 0..res.pow(n as u32) {
        node(flat, res, &lo_in, &hi_in, &step, &mut y);
        if p.boundary_distance(&y)? < min_dist {
            continue;
        }
        let s = s_max(u0, udot0, &y)?;
        if s.is_finite() && best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, y.clone()));
        }
    }
    let Some((mut s_best, mut y_best)) = best else {
        return Ok(Lifespan {
            time: T::infinity(),
            binding_point: None,
        });
    };

    let k = 10usize;
    let side = 2 * k + 1;
    let mut w: T = step.iter().fold(T::zero(), |m, &s| m.max(s));
    let stop = T::lit(grid.refine_width);
    let mut z = vec![T::zero(); n];
    let mut idx = vec![0usize; n];
    while w > stop {
        let centre = y_best.clone();
        for flat in 0..side.pow(n as u32) {
            let mut f = flat;
            for d in 0..n {
                idx[d] = f % side;
                f /= side;
            }
            for d in 0..n {
                let off = T::from_usize(idx[d]).unwrap() - T::from_usize(k).unwrap();
                z[d] = centre[d] + w * off / T::from_usize(k).unwrap();
            }
            if p.boundary_distance(&z)? <= T::zero() {
                continue;
            }
            let s = s_max(u0, udot0, &z)?;
            if s < s_best {
                s_best = s;
                y_best.copy_from_slice(&z);
            }
        }
        w /= T::lit(4.0);
    }
    Ok(Lifespan {
        time: s_best,
        binding_point: Some(y_best),
    })
}

/// The conjugate `ψ = u*` regarded as a field on an integer cube of
/// `x`-space, so that a second Legendre transform recovers `u`.
pub struct ConjugateField<'a, T, G: ?Sized> {
    inner: &'a G,
    cube: DelzantPolytope,
    options: LegendreOptions,
    _marker: std::marker::PhantomData<T>,
}

impl<'a, T: Real, G: ScalarField<T> + ?Sized> ConjugateField<'a, T, G> {
    /// `x ∈ [−half_width, half_width]ⁿ`
    pub fn new(inner: &'a G, half_width: i64, options: LegendreOptions) -> Result<Self> {
        Ok(Self {
            inner,
            cube: DelzantPolytope::cube(inner.dim(), half_width)?,
            options,
            _marker: std::marker::PhantomData,
        })
    }

    fn argmax(&self, x: &[T]) -> Result<(Vec<T>, T)> {
        let m = legendre_search(self.inner, x, &self.options)?.maximizers;
        Ok((m.points[0].clone(), m.value))
    }
}

impl<'a, T: Real, G: ScalarField<T> + ?Sized> ScalarField<T> for ConjugateField<'a, T, G> {
    fn domain(&self) -> &DelzantPolytope {
        &self.cube
    }

    fn value(&self, x: &[T]) -> Result<T> {
        Ok(self.argmax(x)?.1)
    }

    fn gradient(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.argmax(x)?.0)
    }

    fn hessian(&self, x: &[T]) -> Result<Matrix<T>> {
        let (y, _) = self.argmax(x)?;
        self.inner
            .hessian(&y)?
            .inverse_spd()
            .ok_or_else(|| Error::numerical(format!("conjugate Hessian undefined at {x:?}")))
    }

    fn smooth_to_boundary(&self) -> bool {
        true
    }
}

fn node<T: Real>(flat: usize, res: usize, lo: &[T], hi: &[T], step: &[T], out: &mut [T]) {
    let mut f = flat;
    for d in 0..out.len() {
        let i = f % res;
        f /= res;
        out[d] = if i + 1 == res {
            hi[d]
        } else {
            lo[d] + step[d] * T::from_usize(i).unwrap()
        };
    }
}

fn unflatten(flat: usize, res: usize, idx: &mut [usize]) {
    let mut f = flat;
    for i in idx.iter_mut() {
        *i = f % res;
        f /= res;
    }
}

fn is_local_max<T: Real>(values: &[Option<T>], idx: &[usize], res: usize, v: T) -> bool {
    let n = idx.len();
    let offsets = 3usize.pow(n as u32);
    'outer: for o in 0..offsets {
        let mut f = o;
        let mut flat = 0usize;
        let mut mul = 1usize;
        let mut centre = true;
        for &i in idx {
            let d = f % 3;
            f /= 3;
            if d != 1 {
                centre = false;
            }
            let j = i as isize + d as isize - 1;
            if j < 0 || j >= res as isize {
                continue 'outer;
            }
            flat += j as usize * mul;
            mul *= res;
        }
        if centre {
            continue;
        }
        if let Some(w) = values[flat] {
            if w > v {
                return false;
            }
        }
    }
    true
}

fn diameter_of<T: Real>(points: &[Vec<T>]) -> T {
    let mut d = T::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max(distance(a, b));
        }
    }
    d
}

/// Damped Newton from a grid candidate, with a zoom-grid fallback for
/// boundary or degenerate maxima.
fn refine<T, G, O>(
    g: &G,
    x: &[T],
    y0: &[T],
    v0: T,
    spacing: T,
    opts: &LegendreOptions,
    objective: &O,
) -> Result<(Vec<T>, T)>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
    O: Fn(&[T]) -> Result<T>,
{
    let p = g.domain();
    let singular = !g.smooth_to_boundary();
    let mut y = y0.to_vec();
    let mut v = v0;
    if !p.contains_strictly(&y) && singular {
        // Guillemin-type maximizers are interior; step off the boundary
        let c = p.centroid::<T>();
        let dir: Vec<T> = c.iter().zip(&y).map(|(&a, &b)| a - b).collect();
        let len = norm(&dir);
        let t = (spacing / (T::lit(4.0) * len)).min(T::lit(0.5));
        for (yi, di) in y.iter_mut().zip(&dir) {
            *yi += t * *di;
        }
        v = objective(&y)?;
    }
    if p.contains_strictly(&y) {
        if let Some((yn, vn)) = newton(g, x, &y, v, spacing, opts, objective)? {
            return Ok((yn, vn));
        }
    }
    zoom(g, &y, v, spacing, objective)
}

fn newton<T, G, O>(
    g: &G,
    x: &[T],
    y0: &[T],
    v0: T,
    spacing: T,
    opts: &LegendreOptions,
    objective: &O,
) -> Result<Option<(Vec<T>, T)>>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
    O: Fn(&[T]) -> Result<T>,
{
    let p = g.domain();
    let n = p.dim();
    let mut y = y0.to_vec();
    let mut v = v0;
    let mut trial = vec![T::zero(); n];
    let eps = T::epsilon();
    for _ in 0..opts.newton_iterations {
        let gy = g.gradient(&y)?;
        let grad: Vec<T> = x.iter().zip(&gy).map(|(&a, &b)| a - b).collect();
        let scale = T::one() + norm(x) + norm(&gy);
        if norm(&grad) <= T::lit(16.0) * eps * scale {
            return Ok(accept(g, &y, v));
        }
        let hess = g.hessian(&y)?;
        let dir = match hess.solve_spd(&grad) {
            Some(d) => d,
            None => return Ok(None),
        };
        let mut t = T::one();
        let mut moved = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = y[i] + t * dir[i];
            }
            if p.contains_strictly(&trial) {
                let vt = objective(&trial)?;
                if vt >= v - T::lit(4.0) * eps * (T::one() + v.abs()) {
                    moved = true;
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        if !moved {
            break;
        }
        let step = t * norm(&dir);
        y.copy_from_slice(&trial);
        v = objective(&y)?;
        if step <= T::lit(4.0) * eps * (T::one() + norm(&y)) {
            return Ok(accept(g, &y, v));
        }
        if step > T::lit(1e3) * spacing.max(T::one()) {
            return Ok(None);
        }
    }
    // accept only if the stationarity residual is small
    let gy = g.gradient(&y)?;
    let grad: Vec<T> = x.iter().zip(&gy).map(|(&a, &b)| a - b).collect();
    let scale = T::one() + norm(x) + norm(&gy);
    if norm(&grad) <= T::lit(1e-9) * scale {
        Ok(accept(g, &y, v))
    } else {
        Ok(None)
    }
}

fn accept<T: Real, G: ScalarField<T> + ?Sized>(g: &G, y: &[T], v: T) -> Option<(Vec<T>, T)> {
    // a stationary point that is not a strict local max is handed to the zoom
    match g.hessian(y) {
        Ok(h) if h.cholesky().is_some() => Some((y.to_vec(), v)),
        _ => None,
    }
}

fn zoom<T, G, O>(g: &G, y0: &[T], v0: T, spacing: T, objective: &O) -> Result<(Vec<T>, T)>
where
    T: Real,
    G: ScalarField<T> + ?Sized,
    O: Fn(&[T]) -> Result<T>,
{
    let p = g.domain();
    let n = p.dim();
    let k = 5usize;
    let side = 2 * k + 1;
    let mut y = y0.to_vec();
    let mut v = v0;
    let mut w = spacing;
    let stop = T::lit(1e-13) * (T::one() + norm(&y));
    let mut z = vec![T::zero(); n];
    while w > stop {
        let centre = y.clone();
        for flat in 0..side.pow(n as u32) {
            let mut f = flat;
            for d in 0..n {
                let off = T::from_usize(f % side).unwrap() - T::from_usize(k).unwrap();
                f /= side;
                z[d] = centre[d] + w * off / T::from_usize(k).unwrap();
            }
            if p.facet_values_unchecked(&z).iter().any(|&l| l < T::zero()) {
                continue;
            }
            let vz = objective(&z)?;
            if vz > v {
                v = vz;
                y.copy_from_slice(&z);
            }
        }
        w *= T::lit(0.25);
    }
    Ok((y, v))
}
