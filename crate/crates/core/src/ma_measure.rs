//! Alexandrov Monge-Ampère measures of piecewise-linear convex functions on
//! a rectangular grid.
//!
//! The lower convex envelope of grid samples is computed exactly for `m ≤ 2`
//! (for `m = 2` by edge flips on a triangulation of the grid nodes, lowering
//! nodes that are not on the lower hull). The mass of an interior node is
//! the Lebesgue measure of its subdifferential, which for `m = 2` is the
//! convex hull of the gradients of its incident triangles. Boundary nodes
//! carry unbounded subdifferentials and are excluded. For `m ≥ 3` masses are
//! estimated by Monte Carlo over slopes.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::Real;

/// A convex piecewise-linear function sampled on a tensor grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PLConvexFunction<T> {
    axes: Vec<Vec<T>>,
    raw: Vec<T>,
    values: Vec<T>,
    /// Counter-clockwise node triples for `m = 2`; empty otherwise.
    triangles: Vec<[usize; 3]>,
    exact: bool,
}

/// One node of the measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom<T> {
    pub index: usize,
    pub point: Vec<T>,
    pub mass: T,
    pub singular: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MADecomposition<T> {
    /// Interior nodes with positive mass, in node order.
    pub atoms: Vec<Atom<T>>,
    pub total_mass: T,
    pub singular_mass: T,
    pub regular_mass: T,
    /// 95% half-width of the total for Monte Carlo estimates, zero when exact.
    pub half_width: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureOptions {
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            mc_samples: 200_000,
            seed: 0,
        }
    }
}

impl<T: Real> PLConvexFunction<T> {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<T>] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Envelope values at the nodes, last axis fastest.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn raw(&self) -> &[T] {
        &self.raw
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// False for `m ≥ 3`, where the stored values are the raw samples.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn point(&self, index: usize) -> Vec<T> {
        let mut idx = self.multi_index(index);
        idx.iter_mut().zip(&self.axes).map(|(i, ax)| ax[*i]).collect()
    }

    fn multi_index(&self, mut index: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for d in (0..self.axes.len()).rev() {
            let len = self.axes[d].len();
            idx[d] = index % len;
            index /= len;
        }
        idx
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        self.multi_index(index)
            .iter()
            .zip(&self.axes)
            .any(|(&i, ax)| i == 0 || i + 1 == ax.len())
    }

    /// Largest violation of the midpoint inequality over pairs of nodes two
    /// steps apart along each axis.
    pub fn midpoint_defect(&self) -> T {
        let shape = self.shape();
        let mut strides = vec![1usize; shape.len()];
        for d in (0..shape.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * shape[d + 1];
        }
        let mut worst = T::zero();
        for k in 0..self.len() {
            let idx = self.multi_index(k);
            for d in 0..shape.len() {
                if idx[d] == 0 || idx[d] + 1 >= shape[d] {
                    continue;
                }
                let ax = &self.axes[d];
                let (a, b, c) = (ax[idx[d] - 1], ax[idx[d]], ax[idx[d] + 1]);
                let t = (b - a) / (c - a);
                let interp = (T::one() - t) * self.values[k - strides[d]] + t * self.values[k + strides[d]];
                worst = worst.max(self.values[k] - interp);
            }
        }
        worst
    }
}

/// Lower convex envelope of grid samples; `samples` uses last-axis-fastest
/// order over the tensor grid spanned by `axes`.
pub fn pl_convexify<T: Real>(axes: Vec<Vec<T>>, samples: Vec<T>) -> Result<PLConvexFunction<T>> {
    if axes.is_empty() {
        return Err(Error::input("at least one axis is required"));
    }
    for ax in &axes {
        if ax.len() < 2 {
            return Err(Error::input(
                "each axis needs two nodes for affinely independent samples",
            ));
        }
        if ax.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("axis nodes must be strictly increasing"));
        }
    }
    let count: usize = axes.iter().map(Vec::len).product();
    if samples.len() != count {
        return Err(Error::DimensionMismatch {
            expected: count,
            got: samples.len(),
        });
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite sample {v}")));
    }
    match axes.len() {
        1 => {
            let values = envelope_1d(&axes[0], &samples);
            Ok(PLConvexFunction {
                axes,
                raw: samples,
                values,
                triangles: Vec::new(),
                exact: true,
            })
        }
        2 => {
            let (values, triangles) = envelope_2d(&axes, &samples)?;
            Ok(PLConvexFunction {
                axes,
                raw: samples,
                values,
                triangles,
                exact: true,
            })
        }
        _ => {
            log::warn!("envelope not computed for dimension {}; using raw samples", axes.len());
            Ok(PLConvexFunction {
                axes,
                values: samples.clone(),
                raw: samples,
                triangles: Vec::new(),
                exact: false,
            })
        }
    }
}

fn envelope_1d<T: Real>(x: &[T], f: &[T]) -> Vec<T> {
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b when it lies on or above the chord a–i
            if (f[b] - f[a]) * (x[i] - x[a]) >= (f[i] - f[a]) * (x[b] - x[a]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = f.to_vec();
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let t = (x[i] - x[a]) / (x[b] - x[a]);
            out[i] = (T::one() - t) * f[a] + t * f[b];
        }
    }
    out
}

fn orient<T: Real>(p: &[T; 2], q: &[T; 2], r: &[T; 2]) -> T {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

/// Value at `z` of the plane through three lifted points.
fn plane_at<T: Real>(p: [&[T; 2]; 3], f: [T; 3], z: &[T; 2]) -> T {
    let area = orient(p[0], p[1], p[2]);
    let l0 = orient(z, p[1], p[2]) / area;
    let l1 = orient(p[0], z, p[2]) / area;
    let l2 = T::one() - l0 - l1;
    l0 * f[0] + l1 * f[1] + l2 * f[2]
}

struct Mesh<T> {
    pts: Vec<[T; 2]>,
    f: Vec<T>,
    tri: Vec<[usize; 3]>,
    /// `nb[t][k]` is the triangle across the edge opposite vertex `k` of `t`.
    nb: Vec<[Option<usize>; 3]>,
}

impl<T: Real> Mesh<T> {
    fn grid(axes: &[Vec<T>], f: &[T]) -> Self {
        let (n0, n1) = (axes[0].len(), axes[1].len());
        let id = |i: usize, j: usize| i * n1 + j;
        let mut pts = Vec::with_capacity(n0 * n1);
        for i in 0..n0 {
            for j in 0..n1 {
                pts.push([axes[0][i], axes[1][j]]);
            }
        }
        let mut tri = Vec::with_capacity(2 * (n0 - 1) * (n1 - 1));
        for i in 0..n0 - 1 {
            for j in 0..n1 - 1 {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                // the diagonal with the smaller endpoint sum is the convex fold
                if f[a] + f[c] <= f[b] + f[d] {
                    tri.push([a, b, c]);
                    tri.push([a, c, d]);
                } else {
                    tri.push([a, b, d]);
                    tri.push([b, c, d]);
                }
            }
        }
        let mut mesh = Self {
            pts,
            f: f.to_vec(),
            nb: vec![[None; 3]; tri.len()],
            tri,
        };
        mesh.link();
        mesh
    }

    fn link(&mut self) {
        let mut edges: std::collections::HashMap<(usize, usize), (usize, usize)> =
            std::collections::HashMap::with_capacity(self.tri.len() * 2);
        for t in 0..self.tri.len() {
            for k in 0..3 {
                let (u, v) = (self.tri[t][(k + 1) % 3], self.tri[t][(k + 2) % 3]);
                if let Some((t2, k2)) = edges.remove(&(v, u)) {
                    self.nb[t][k] = Some(t2);
                    self.nb[t2][k2] = Some(t);
                } else {
                    edges.insert((u, v), (t, k));
                }
            }
        }
    }

    fn rotate_to(&mut self, t: usize, k: usize) {
        self.tri[t].rotate_left(k);
        self.nb[t].rotate_left(k);
    }

    fn slot(&self, t: usize, other: usize) -> usize {
        (0..3)
            .find(|&k| self.nb[t][k] == Some(other))
            .expect("adjacent triangles")
    }

    fn repoint(&mut self, t: Option<usize>, from: usize, to: usize) {
        if let Some(t) = t {
            for k in 0..3 {
                if self.nb[t][k] == Some(from) {
                    self.nb[t][k] = Some(to);
                }
            }
        }
    }

    /// Makes the edge opposite vertex `k` of `t1` locally convex.
    fn fix_edge(&mut self, t1: usize, k: usize, tol: T) -> Repair {
        let Some(t2) = self.nb[t1][k] else { return Repair::None };
        let k2 = self.slot(t2, t1);
        let (c, a, b) = (self.tri[t1][k], self.tri[t1][(k + 1) % 3], self.tri[t1][(k + 2) % 3]);
        let d = self.tri[t2][k2];
        debug_assert_eq!(self.tri[t2][(k2 + 1) % 3], b);
        let (pa, pb, pc, pd) = (self.pts[a], self.pts[b], self.pts[c], self.pts[d]);
        let plane_d = plane_at([&pc, &pa, &pb], [self.f[c], self.f[a], self.f[b]], &pd);
        if self.f[d] >= plane_d - tol {
            return Repair::None;
        }
        let o1 = orient(&pc, &pa, &pd);
        let o2 = orient(&pd, &pb, &pc);
        let eps = T::epsilon() * T::lit(64.0) * (pd[0] - pc[0]).abs().max((pd[1] - pc[1]).abs()).powi(2);
        if o1 > eps && o2 > eps {
            self.rotate_to(t1, k);
            self.rotate_to(t2, k2);
            let n1 = self.nb[t1];
            let n2 = self.nb[t2];
            // t1 = [c,a,b] (n1 = [t2, across bc, across ca]);
            // t2 = [d,b,a] (n2 = [t1, across ad, across db])
            self.tri[t1] = [c, a, d];
            self.nb[t1] = [n2[1], Some(t2), n1[2]];
            self.tri[t2] = [d, b, c];
            self.nb[t2] = [n1[1], Some(t1), n2[2]];
            self.repoint(n2[1], t2, t1);
            self.repoint(n1[1], t1, t2);
            return Repair::Flipped { t1, t2, a, b, c, d };
        }
        // non-convex quad: the reflex corner lies in the triangle of the
        // other three and is not a lower-hull vertex
        if o1 <= eps {
            self.f[a] = plane_at([&pb, &pc, &pd], [self.f[b], self.f[c], self.f[d]], &pa);
            Repair::Lowered(a)
        } else {
            self.f[b] = plane_at([&pa, &pc, &pd], [self.f[a], self.f[c], self.f[d]], &pb);
            Repair::Lowered(b)
        }
    }
}

enum Repair {
    None,
    Flipped {
        t1: usize,
        t2: usize,
        a: usize,
        b: usize,
        c: usize,
        d: usize,
    },
    Lowered(usize),
}

/// Repairs per triangle before giving up.
const MAX_REPAIRS_PER_TRIANGLE: usize = 10_000;

fn envelope_2d<T: Real>(axes: &[Vec<T>], samples: &[T]) -> Result<(Vec<T>, Vec<[usize; 3]>)> {
    let mut mesh = Mesh::grid(axes, samples);
    let scale = samples.iter().fold(T::zero(), |m, v| m.max(v.abs())) + T::one();
    let tol = T::lit(1e-12) * scale;
    let mut star: Vec<Vec<usize>> = vec![Vec::new(); mesh.pts.len()];
    for (t, tri) in mesh.tri.iter().enumerate() {
        for &v in tri {
            star[v].push(t);
        }
    }
    let mut queued = vec![true; mesh.tri.len()];
    let mut queue: std::collections::VecDeque<usize> = (0..mesh.tri.len()).collect();
    let budget = MAX_REPAIRS_PER_TRIANGLE * mesh.tri.len();
    let mut repairs = 0usize;
    let push = |t: usize, queue: &mut std::collections::VecDeque<usize>, queued: &mut Vec<bool>| {
        if !queued[t] {
            queued[t] = true;
            queue.push_back(t);
        }
    };
    while let Some(t) = queue.pop_front() {
        queued[t] = false;
        for k in 0..3 {
            let touched: Vec<usize> = match mesh.fix_edge(t, k, tol) {
                Repair::None => continue,
                Repair::Flipped { t1, t2, a, b, c, d } => {
                    star[b].retain(|&x| x != t1);
                    star[d].push(t1);
                    star[a].retain(|&x| x != t2);
                    star[c].push(t2);
                    vec![t1, t2]
                }
                Repair::Lowered(v) => star[v].clone(),
            };
            for t in touched {
                push(t, &mut queue, &mut queued);
                for n in mesh.nb[t].into_iter().flatten() {
                    push(n, &mut queue, &mut queued);
                }
            }
            repairs += 1;
            if repairs > budget {
                return Err(Error::numerical("convex envelope did not converge"));
            }
            break;
        }
    }
    log::debug!("envelope converged after {repairs} repairs");
    Ok((mesh.f, mesh.tri))
}

/// Exact Alexandrov measure for `m ≤ 2`, Monte Carlo above.
pub fn alexandrov_measure<T: Real>(f: &PLConvexFunction<T>) -> Result<MADecomposition<T>> {
    alexandrov_measure_with(f, &MeasureOptions::default())
}

pub fn alexandrov_measure_with<T: Real>(
    f: &PLConvexFunction<T>,
    options: &MeasureOptions,
) -> Result<MADecomposition<T>> {
    let masses = match f.dim() {
        1 => masses_1d(f),
        2 => masses_2d(f),
        _ => return monte_carlo(f, options),
    };
    Ok(decompose(f, masses, T::zero()))
}

fn decompose<T: Real>(f: &PLConvexFunction<T>, masses: Vec<T>, half_width: T) -> MADecomposition<T> {
    let atoms: Vec<Atom<T>> = masses
        .into_iter()
        .enumerate()
        .filter(|(_, m)| *m > T::zero())
        .map(|(index, mass)| Atom {
            index,
            point: f.point(index),
            mass,
            singular: false,
        })
        .collect();
    let total = atoms
        .iter()
        .map(|a| a.mass)
        .collect::<crate::numerics::NeumaierSum<T>>()
        .value();
    MADecomposition {
        atoms,
        total_mass: total,
        singular_mass: T::zero(),
        regular_mass: total,
        half_width,
    }
}

fn masses_1d<T: Real>(f: &PLConvexFunction<T>) -> Vec<T> {
    let x = &f.axes[0];
    let v = &f.values;
    let mut out = vec![T::zero(); v.len()];
    for i in 1..v.len() - 1 {
        let left = (v[i] - v[i - 1]) / (x[i] - x[i - 1]);
        let right = (v[i + 1] - v[i]) / (x[i + 1] - x[i]);
        out[i] = (right - left).max(T::zero());
    }
    out
}

/// Gradient of the affine interpolant on a triangle.
fn triangle_gradient<T: Real>(p: [&[T; 2]; 3], f: [T; 3]) -> [T; 2] {
    let (dx1, dy1, df1) = (p[1][0] - p[0][0], p[1][1] - p[0][1], f[1] - f[0]);
    let (dx2, dy2, df2) = (p[2][0] - p[0][0], p[2][1] - p[0][1], f[2] - f[0]);
    let det = dx1 * dy2 - dx2 * dy1;
    [(df1 * dy2 - df2 * dy1) / det, (dx1 * df2 - dx2 * df1) / det]
}

/// Area of the convex hull of planar points (monotone chain).
pub fn hull_area<T: Real>(points: &mut [[T; 2]]) -> T {
    if points.len() < 3 {
        return T::zero();
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut hull: Vec<[T; 2]> = Vec::with_capacity(points.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[T; 2]>> = if pass == 0 {
            Box::new(points.iter())
        } else {
            Box::new(points.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= T::zero() {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    let mut area = T::zero();
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        area += a[0] * b[1] - a[1] * b[0];
    }
    (area * T::lit(0.5)).max(T::zero())
}

fn masses_2d<T: Real>(f: &PLConvexFunction<T>) -> Vec<T> {
    let n1 = f.axes[1].len();
    let pt = |k: usize| [f.axes[0][k / n1], f.axes[1][k % n1]];
    let grads: Vec<[T; 2]> = f
        .triangles
        .par_iter()
        .map(|t| {
            let (a, b, c) = (pt(t[0]), pt(t[1]), pt(t[2]));
            triangle_gradient([&a, &b, &c], [f.values[t[0]], f.values[t[1]], f.values[t[2]]])
        })
        .collect();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); f.len()];
    for (ti, t) in f.triangles.iter().enumerate() {
        for &v in t {
            incident[v].push(ti);
        }
    }
    (0..f.len())
        .into_par_iter()
        .map(|v| {
            if f.is_boundary(v) {
                return T::zero();
            }
            let mut g: Vec<[T; 2]> = incident[v].iter().map(|&t| grads[t]).collect();
            hull_area(&mut g)
        })
        .collect()
}

/// Slopes sampled uniformly in the box spanned by axis difference quotients;
/// each slope charges the node maximizing `⟨q, p⟩ − f(p)`.
fn monte_carlo<T: Real>(f: &PLConvexFunction<T>, options: &MeasureOptions) -> Result<MADecomposition<T>> {
    let m = f.dim();
    let shape = f.shape();
    let mut strides = vec![1usize; m];
    for d in (0..m - 1).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    let mut lo = vec![T::infinity(); m];
    let mut hi = vec![T::neg_infinity(); m];
    for k in 0..f.len() {
        let idx = f.multi_index(k);
        for d in 0..m {
            if idx[d] + 1 < shape[d] {
                let q = (f.values[k + strides[d]] - f.values[k]) / (f.axes[d][idx[d] + 1] - f.axes[d][idx[d]]);
                lo[d] = lo[d].min(q);
                hi[d] = hi[d].max(q);
            }
        }
    }
    let volume = lo.iter().zip(&hi).fold(T::one(), |v, (&a, &b)| v * (b - a));
    let samples = options.mc_samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let slopes: Vec<Vec<T>> = (0..samples)
        .map(|_| {
            (0..m)
                .map(|d| lo[d] + (hi[d] - lo[d]) * T::lit(rng.gen::<f64>()))
                .collect()
        })
        .collect();
    let points: Vec<Vec<T>> = (0..f.len()).map(|k| f.point(k)).collect();
    let winners: Vec<usize> = slopes
        .par_iter()
        .map(|q| {
            let mut best = (T::neg_infinity(), 0usize);
            for (k, p) in points.iter().enumerate() {
                let v = q.iter().zip(p).fold(-f.values[k], |acc, (&a, &b)| acc + a * b);
                if v > best.0 {
                    best = (v, k);
                }
            }
            best.1
        })
        .collect();
    let mut hits = vec![0usize; f.len()];
    for w in winners {
        hits[w] += 1;
    }
    let unit = volume / T::from_usize(samples).unwrap();
    let masses: Vec<T> = hits
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            if f.is_boundary(k) {
                T::zero()
            } else {
                unit * T::from_usize(h).unwrap()
            }
        })
        .collect();
    let interior: usize = hits
        .iter()
        .enumerate()
        .filter(|(k, _)| !f.is_boundary(*k))
        .map(|(_, &h)| h)
        .sum();
    let p = T::from_usize(interior).unwrap() / T::from_usize(samples).unwrap();
    let half = T::lit(1.96) * volume * (p * (T::one() - p) / T::from_usize(samples).unwrap()).sqrt();
    Ok(decompose(f, masses, half))
}

/// Flags atoms with `indicator(point)` and returns `(regular, singular)`.
pub fn mass_split<T, F>(decomposition: &mut MADecomposition<T>, indicator: F) -> Result<(T, T)>
where
    T: Real,
    F: Fn(&[T]) -> Result<bool> + Sync,
{
    let flags: Vec<bool> = decomposition
        .atoms
        .par_iter()
        .map(|a| indicator(&a.point))
        .collect::<Result<_>>()?;
    let mut singular = crate::numerics::NeumaierSum::new();
    for (a, flag) in decomposition.atoms.iter_mut().zip(flags) {
        a.singular = flag;
        if flag {
            singular.add(a.mass);
        }
    }
    decomposition.singular_mass = singular.value();
    decomposition.regular_mass = decomposition.total_mass - decomposition.singular_mass;
    Ok((decomposition.regular_mass, decomposition.singular_mass))
}

impl<T: Real> MADecomposition<T> {
    /// `s, x, mass, singular_flag`; higher coordinates are semicolon-joined.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "s,x,mass,singular_flag")?;
        for a in &self.atoms {
            let x = a.point[1..]
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect::<Vec<_>>()
                .join(";");
            writeln!(w, "{:.16e},{x},{:.16e},{}", a.point[0], a.mass, u8::from(a.singular))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn singular_share(&self) -> T {
        if self.total_mass > T::zero() {
            self.singular_mass / self.total_mass
        } else {
            T::zero()
        }
    }
}
