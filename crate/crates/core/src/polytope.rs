//! Delzant lattice polytopes `P = {y : ⟨y, v_j⟩ − λ_j ≥ 0}`.
//!
//! Facet data is the primary representation; vertices are derived exactly in
//! rational arithmetic by solving every `n`-subset of facet equations.

use std::cmp::Ordering;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::Matrix;
use crate::Real;

pub type Rational = Ratio<i64>;

/// Relative slack for floating-point membership tests,
/// `l_j(y) ≥ −MEMBERSHIP_TOL·(1 + |λ_j|)`.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DelzantPolytope {
    dim: usize,
    normals: Vec<Vec<i64>>,
    offsets: Vec<i64>,
    vertices: Vec<Vec<Rational>>,
}

/// Lattice points `α ∈ ℤⁿ` with `α/N ∈ P`, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeSet {
    pub level: u32,
    pub points: Vec<Vec<i64>>,
}

impl LatticeSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of `alpha` in the lexicographic enumeration.
    pub fn position(&self, alpha: &[i64]) -> Option<usize> {
        self.points.binary_search_by(|p| p.as_slice().cmp(alpha)).ok()
    }

    /// The rescaled point `α/N`.
    pub fn scaled<T: Real>(&self, index: usize) -> Vec<T> {
        let n = T::from_int(self.level as i64);
        self.points[index].iter().map(|&a| T::from_int(a) / n).collect()
    }
}

impl DelzantPolytope {
    /// Builds and validates a polytope from facet normals and offsets.
    pub fn new(normals: Vec<Vec<i64>>, offsets: Vec<i64>) -> Result<Self> {
        let dim = normals
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::input("polytope needs at least one facet"))?;
        if dim == 0 {
            return Err(Error::input("polytope dimension must be positive"));
        }
        if normals.len() != offsets.len() {
            return Err(Error::input(format!(
                "{} normals but {} offsets",
                normals.len(),
                offsets.len()
            )));
        }
        for v in &normals {
            check_dim(dim, v.len())?;
            let g = v.iter().fold(0i64, |g, &c| g.gcd(&c));
            if g != 1 {
                return Err(Error::input(format!("facet normal {v:?} is not primitive")));
            }
        }
        if normals.len() <= dim {
            return Err(Error::input(format!(
                "{} facets cannot bound a polytope of dimension {dim}",
                normals.len()
            )));
        }
        for i in 0..normals.len() {
            for j in (i + 1)..normals.len() {
                if normals[i] == normals[j] {
                    return Err(Error::input(format!("duplicate facet normal {:?}", normals[i])));
                }
            }
        }
        check_bounded(dim, &normals)?;

        let vertices = enumerate_vertices(dim, &normals, &offsets)?;
        if vertices.len() < dim + 1 {
            return Err(Error::input("polytope is empty or not full-dimensional"));
        }
        let mut poly = Self {
            dim,
            normals,
            offsets,
            vertices,
        };
        poly.check_delzant()?;
        if poly.dim == 2 {
            poly.sort_vertices_ccw();
        }
        Ok(poly)
    }

    /// `P = [0, 1]`, the moment polytope of ℂP¹.
    pub fn segment() -> Self {
        Self::new(vec![vec![1], vec![-1]], vec![0, -1]).expect("segment is Delzant")
    }

    /// Unit square `[0, 1]²`.
    pub fn square() -> Self {
        Self::new(
            vec![vec![1, 0], vec![0, 1], vec![-1, 0], vec![0, -1]],
            vec![0, 0, -1, -1],
        )
        .expect("square is Delzant")
    }

    /// Standard simplex `{y ≥ 0, Σ yᵢ ≤ 1}` in dimension `n`.
    pub fn simplex(n: usize) -> Result<Self> {
        let mut normals = Vec::with_capacity(n + 1);
        let mut offsets = Vec::with_capacity(n + 1);
        for i in 0..n {
            let mut v = vec![0; n];
            v[i] = 1;
            normals.push(v);
            offsets.push(0);
        }
        normals.push(vec![-1; n]);
        offsets.push(-1);
        Self::new(normals, offsets)
    }

    /// Integer cube `[−k, k]ⁿ`.
    pub fn cube(n: usize, k: i64) -> Result<Self> {
        if k <= 0 {
            return Err(Error::input("cube half-width must be positive"));
        }
        let mut normals = Vec::with_capacity(2 * n);
        let mut offsets = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut v = vec![0; n];
            v[i] = 1;
            normals.push(v.clone());
            offsets.push(-k);
            v[i] = -1;
            normals.push(v);
            offsets.push(-k);
        }
        Self::new(normals, offsets)
    }

    /// Named presets: `segment`, `square`, `simplex2`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "segment" => Ok(Self::segment()),
            "square" => Ok(Self::square()),
            "simplex2" => Self::simplex(2),
            other => Err(Error::input(format!("unknown polytope preset '{other}'"))),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_facets(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[Vec<i64>] {
        &self.normals
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn vertices(&self) -> &[Vec<Rational>] {
        &self.vertices
    }

    pub fn vertices_real<T: Real>(&self) -> Vec<Vec<T>> {
        self.vertices
            .iter()
            .map(|v| v.iter().map(|&q| rational_to_real(q)).collect())
            .collect()
    }

    pub fn centroid<T: Real>(&self) -> Vec<T> {
        let verts = self.vertices_real::<T>();
        let k = T::from_usize(verts.len()).unwrap();
        (0..self.dim)
            .map(|i| verts.iter().fold(T::zero(), |a, v| a + v[i]) / k)
            .collect()
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box<T: Real>(&self) -> (Vec<T>, Vec<T>) {
        let (lo, hi) = self.rational_box();
        (
            lo.into_iter().map(rational_to_real).collect(),
            hi.into_iter().map(rational_to_real).collect(),
        )
    }

    fn rational_box(&self) -> (Vec<Rational>, Vec<Rational>) {
        let mut lo = self.vertices[0].clone();
        let mut hi = self.vertices[0].clone();
        for v in &self.vertices[1..] {
            for i in 0..self.dim {
                if v[i] < lo[i] {
                    lo[i] = v[i];
                }
                if v[i] > hi[i] {
                    hi[i] = v[i];
                }
            }
        }
        (lo, hi)
    }

    /// `max_{y∈P} |y|`, attained at a vertex.
    pub fn max_norm<T: Real>(&self) -> T {
        self.vertices_real::<T>()
            .iter()
            .map(|v| crate::numerics::linalg::norm(v))
            .fold(T::zero(), T::max)
    }

    /// `(l_1(y), …, l_d(y))` with `l_j(y) = ⟨y, v_j⟩ − λ_j`.
    pub fn facet_values<T: Real>(&self, y: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim, y.len())?;
        Ok(self.facet_values_unchecked(y))
    }

    pub(crate) fn facet_values_unchecked<T: Real>(&self, y: &[T]) -> Vec<T> {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(v, &lam)| {
                v.iter()
                    .zip(y)
                    .fold(T::zero(), |acc, (&c, &yi)| acc + T::from_int(c) * yi)
                    - T::from_int(lam)
            })
            .collect()
    }

    /// Membership with the floating-point slack [`MEMBERSHIP_TOL`].
    pub fn contains<T: Real>(&self, y: &[T]) -> bool {
        if y.len() != self.dim {
            return false;
        }
        let tol = T::lit(MEMBERSHIP_TOL);
        self.facet_values_unchecked(y)
            .iter()
            .zip(&self.offsets)
            .all(|(&l, &lam)| l >= -tol * (T::one() + T::from_int(lam.abs())))
    }

    /// True when every facet value is strictly positive.
    pub fn contains_strictly<T: Real>(&self, y: &[T]) -> bool {
        y.len() == self.dim && self.facet_values_unchecked(y).iter().all(|&l| l > T::zero())
    }

    /// Euclidean distance from `y ∈ P` to `∂P`, computed as
    /// `min_j l_j(y)/|v_j|`. For `y` outside `P` the same expression is
    /// returned; it is negative and bounds the depth of the violation.
    pub fn boundary_distance<T: Real>(&self, y: &[T]) -> Result<T> {
        let l = self.facet_values(y)?;
        Ok(l.iter()
            .zip(&self.normals)
            .map(|(&lj, v)| {
                let norm = v.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
                lj / T::lit(norm)
            })
            .fold(T::infinity(), T::min))
    }

    /// All `α ∈ ℤⁿ` with `α/N ∈ P`, lexicographically sorted. Membership
    /// is decided in exact integer arithmetic: `N·l_j(α/N) = ⟨α, v_j⟩ − Nλ_j`.
    pub fn lattice_points(&self, level: u32) -> Result<LatticeSet> {
        if level == 0 {
            return Err(Error::input("lattice level N must be at least 1"));
        }
        let n_big = Rational::from_integer(level as i64);
        let (lo, hi) = self.rational_box();
        let lo: Vec<i64> = lo.iter().map(|q| (q * n_big).ceil().to_integer()).collect();
        let hi: Vec<i64> = hi.iter().map(|q| (q * n_big).floor().to_integer()).collect();
        let mut points = Vec::new();
        let mut alpha = lo.clone();
        loop {
            if self.scaled_facet_values(&alpha, level).iter().all(|&c| c >= 0) {
                points.push(alpha.clone());
            }
            // odometer, last coordinate fastest => lexicographic order
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return Ok(LatticeSet { level, points });
                }
                k -= 1;
                if alpha[k] < hi[k] {
                    alpha[k] += 1;
                    for j in (k + 1)..self.dim {
                        alpha[j] = lo[j];
                    }
                    break;
                }
            }
        }
    }

    /// `N·l_j(α/N) = ⟨α, v_j⟩ − Nλ_j`, exact.
    pub fn scaled_facet_values(&self, alpha: &[i64], level: u32) -> Vec<i64> {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(v, &lam)| {
                let dot: i128 = v.iter().zip(alpha).map(|(&c, &a)| c as i128 * a as i128).sum();
                (dot - level as i128 * lam as i128) as i64
            })
            .collect()
    }

    /// Guillemin potential `u_G = Σ l_k log l_k` with its gradient
    /// `Σ (1 + log l_k) v_k` and Hessian `Σ v_k v_kᵀ / l_k`. Requires `y` in
    /// the interior of `P`.
    pub fn guillemin<T: Real>(&self, y: &[T]) -> Result<(T, Vec<T>, Matrix<T>)> {
        let l = self.facet_values(y)?;
        if let Some((j, &lj)) = l.iter().enumerate().find(|(_, &lj)| !(lj > T::zero())) {
            return Err(Error::domain(format!(
                "Guillemin potential needs an interior point; facet {j} has value {lj}"
            )));
        }
        let mut value = T::zero();
        let mut grad = vec![T::zero(); self.dim];
        let mut hess = Matrix::zeros(self.dim);
        for (v, &lj) in self.normals.iter().zip(&l) {
            let log_l = lj.ln();
            value += lj * log_l;
            let vr: Vec<T> = v.iter().map(|&c| T::from_int(c)).collect();
            for i in 0..self.dim {
                grad[i] += (T::one() + log_l) * vr[i];
            }
            hess.add_outer(&vr, T::one() / lj);
        }
        Ok((value, grad, hess))
    }

    /// Simplices covering `P` for quadrature: the segment itself for `n = 1`
    /// and a vertex fan for `n = 2`.
    pub fn simplices<T: Real>(&self) -> Result<Vec<Vec<Vec<T>>>> {
        let verts = self.vertices_real::<T>();
        match self.dim {
            1 => {
                let (lo, hi) = self.bounding_box::<T>();
                Ok(vec![vec![lo, hi]])
            }
            2 => Ok((1..verts.len() - 1)
                .map(|k| vec![verts[0].clone(), verts[k].clone(), verts[k + 1].clone()])
                .collect()),
            n => Err(Error::Unsupported(format!(
                "polytope quadrature is implemented for n ≤ 2, got n = {n}"
            ))),
        }
    }

    fn check_delzant(&self) -> Result<()> {
        for (idx, vert) in self.vertices.iter().enumerate() {
            let active: Vec<usize> = (0..self.normals.len())
                .filter(|&j| self.exact_facet_value(j, vert).is_zero())
                .collect();
            if active.len() != self.dim {
                return Err(Error::input(format!(
                    "vertex {idx} {:?} lies on {} facets, expected {}",
                    display_rational(vert),
                    active.len(),
                    self.dim
                )));
            }
            if self.dim <= 2 {
                let rows: Vec<Vec<i64>> = active.iter().map(|&j| self.normals[j].clone()).collect();
                let det = integer_det(&rows);
                if det.abs() != 1 {
                    return Err(Error::input(format!(
                        "normals at vertex {:?} do not span the lattice (|det| = {})",
                        display_rational(vert),
                        det.abs()
                    )));
                }
            }
        }
        if self.dim > 2 {
            log::warn!(
                "lattice smoothness of vertex cones is only verified for n ≤ 2; accepting n = {} unchecked",
                self.dim
            );
        }
        for j in 0..self.normals.len() {
            let on = self
                .vertices
                .iter()
                .filter(|v| self.exact_facet_value(j, v).is_zero())
                .count();
            if on < self.dim {
                return Err(Error::input(format!("facet {j} is redundant")));
            }
        }
        Ok(())
    }

    fn exact_facet_value(&self, j: usize, y: &[Rational]) -> Rational {
        self.normals[j]
            .iter()
            .zip(y)
            .fold(Rational::zero(), |acc, (&c, &yi)| acc + yi * c)
            - Rational::from_integer(self.offsets[j])
    }

    fn sort_vertices_ccw(&mut self) {
        let c = self.centroid::<f64>();
        self.vertices.sort_by(|a, b| {
            let ang = |v: &Vec<Rational>| {
                let x = rational_to_real::<f64>(v[0]) - c[0];
                let y = rational_to_real::<f64>(v[1]) - c[1];
                y.atan2(x)
            };
            ang(a).partial_cmp(&ang(b)).unwrap_or(Ordering::Equal)
        });
    }
}

pub(crate) fn rational_to_real<T: Real>(q: Rational) -> T {
    T::from_int(*q.numer()) / T::from_int(*q.denom())
}

fn display_rational(v: &[Rational]) -> Vec<String> {
    v.iter().map(|q| q.to_string()).collect()
}

fn check_bounded(dim: usize, normals: &[Vec<i64>]) -> Result<()> {
    match dim {
        1 => {
            let pos = normals.iter().any(|v| v[0] > 0);
            let neg = normals.iter().any(|v| v[0] < 0);
            if pos && neg {
                Ok(())
            } else {
                Err(Error::input("polytope is unbounded"))
            }
        }
        2 => {
            let mut sorted: Vec<&Vec<i64>> = normals.iter().collect();
            sorted.sort_by(|a, b| {
                let ta = (a[1] as f64).atan2(a[0] as f64);
                let tb = (b[1] as f64).atan2(b[0] as f64);
                ta.partial_cmp(&tb).unwrap_or(Ordering::Equal)
            });
            // consecutive normals must turn by strictly less than π
            for k in 0..sorted.len() {
                let a = sorted[k];
                let b = sorted[(k + 1) % sorted.len()];
                let cross = a[0] as i128 * b[1] as i128 - a[1] as i128 * b[0] as i128;
                if cross <= 0 {
                    return Err(Error::input("polytope is unbounded"));
                }
            }
            Ok(())
        }
        _ => {
            log::warn!("boundedness is not verified for n = {dim}");
            Ok(())
        }
    }
}

fn enumerate_vertices(dim: usize, normals: &[Vec<i64>], offsets: &[i64]) -> Result<Vec<Vec<Rational>>> {
    let mut out: Vec<Vec<Rational>> = Vec::new();
    let mut subset = Vec::with_capacity(dim);
    for_each_subset(normals.len(), dim, 0, &mut subset, &mut |rows| {
        let a: Vec<Vec<Rational>> = rows
            .iter()
            .map(|&j| normals[j].iter().map(|&c| Rational::from_integer(c)).collect())
            .collect();
        let b: Vec<Rational> = rows.iter().map(|&j| Rational::from_integer(offsets[j])).collect();
        if let Some(y) = solve_rational(a, b) {
            let feasible = normals.iter().zip(offsets).all(|(v, &lam)| {
                let val = v.iter().zip(&y).fold(Rational::zero(), |acc, (&c, &yi)| acc + yi * c)
                    - Rational::from_integer(lam);
                !val.is_negative()
            });
            if feasible && !out.contains(&y) {
                out.push(y);
            }
        }
    });
    out.sort();
    Ok(out)
}

fn for_each_subset(n: usize, k: usize, start: usize, current: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if current.len() == k {
        f(current);
        return;
    }
    for i in start..n {
        current.push(i);
        for_each_subset(n, k, i + 1, current, f);
        current.pop();
    }
}

fn solve_rational(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
                let bc = b[col];
                b[r] -= f * bc;
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn integer_det(rows: &[Vec<i64>]) -> i64 {
    match rows.len() {
        1 => rows[0][0],
        2 => rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
        _ => {
            let a: Vec<Vec<Rational>> = rows
                .iter()
                .map(|r| r.iter().map(|&c| Rational::from_integer(c)).collect())
                .collect();
            rational_det(a).to_i64().unwrap_or(0)
        }
    }
}

fn rational_det(mut a: Vec<Vec<Rational>>) -> Rational {
    let n = a.len();
    let mut det = Rational::from_integer(1);
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Rational::zero();
        };
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det *= a[col][col];
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
        }
    }
    det
}
