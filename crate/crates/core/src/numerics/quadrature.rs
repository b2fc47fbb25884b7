//! Adaptive Gauss–Legendre quadrature over a polytope.
//!
//! `P` is covered by simplices (intervals for `n = 1`, triangles for `n = 2`
//! mapped from the unit square by the collapsed Duffy transform). Each panel
//! is integrated with a 16-point and an 8-point rule; their difference is the
//! panel error estimate, and the panel with the largest estimate is bisected
//! (intervals) or split into four (triangles) until the summed estimate meets
//! the relative tolerance.

use crate::error::{Error, Result};
use crate::polytope::DelzantPolytope;
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub error_estimate: T,
    pub panels_used: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    pub order: usize,
    pub rel_tol: f64,
    pub max_panels: usize,
    /// Uniform splits applied to every simplex before adapting.
    pub initial_splits: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            order: 16,
            rel_tol: 1e-8,
            max_panels: 10_000,
            initial_splits: 2,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussRule<T> {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![T::zero(); k];
        let mut weights = vec![T::zero(); k];
        let kf = T::from_usize(k).unwrap();
        let pi = T::PI();
        for i in 0..k.div_ceil(2) {
            let ii = T::from_usize(i).unwrap();
            let mut x = (pi * (ii + T::lit(0.75)) / (kf + T::lit(0.5))).cos();
            let mut dp = T::one();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(k, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= T::epsilon() * T::lit(4.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(k, x);
            if d != T::zero() {
                dp = d;
            }
            let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[k - 1 - i] = x;
            weights[i] = w;
            weights[k - 1 - i] = w;
        }
        Self { nodes, weights }
    }
}

fn legendre_with_derivative<T: Real>(k: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    if k == 0 {
        return (p0, T::zero());
    }
    for j in 2..=k {
        let jf = T::from_usize(j).unwrap();
        let p2 = ((jf + jf - T::one()) * x * p1 - (jf - T::one()) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let kf = T::from_usize(k).unwrap();
    let d = kf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

#[derive(Clone, Debug)]
struct Panel<T> {
    verts: Vec<Vec<T>>,
    value: Vec<T>,
    error: Vec<T>,
    abs: Vec<T>,
}

/// Reusable quadrature over one polytope.
#[derive(Clone, Debug)]
pub struct PolytopeQuadrature<T> {
    dim: usize,
    simplices: Vec<Vec<Vec<T>>>,
    high: GaussRule<T>,
    low: GaussRule<T>,
    options: QuadratureOptions,
}

impl<T: Real> PolytopeQuadrature<T> {
    pub fn new(polytope: &DelzantPolytope, options: QuadratureOptions) -> Result<Self> {
        if options.order < 2 {
            return Err(Error::input("quadrature order must be at least 2"));
        }
        Ok(Self {
            dim: polytope.dim(),
            simplices: polytope.simplices()?,
            high: GaussRule::new(options.order),
            low: GaussRule::new(options.order / 2),
            options,
        })
    }

    pub fn options(&self) -> &QuadratureOptions {
        &self.options
    }

    /// Integrates `components` functions at once; `f(y, out)` fills `out`.
    /// All components share nodes and panels; a panel is refined while any
    /// component misses its tolerance relative to `∫|f_k|`.
    pub fn integrate_multi<F>(&self, components: usize, f: F) -> Result<Vec<QuadratureResult<T>>>
    where
        F: Fn(&[T], &mut [T]),
    {
        let mut scratch = vec![T::zero(); components];
        let mut panels: Vec<Panel<T>> = Vec::new();
        for s in &self.simplices {
            let mut pieces = vec![s.clone()];
            for _ in 0..self.options.initial_splits {
                pieces = pieces.iter().flat_map(|p| self.split(p)).collect();
            }
            for verts in pieces {
                panels.push(self.eval_panel(verts, components, &f, &mut scratch)?);
            }
        }
        let rel = T::lit(self.options.rel_tol);
        let floor = T::lit(1e-300);
        loop {
            let mut value = vec![T::zero(); components];
            let mut error = vec![T::zero(); components];
            let mut abs = vec![T::zero(); components];
            for p in &panels {
                for k in 0..components {
                    value[k] += p.value[k];
                    error[k] += p.error[k];
                    abs[k] += p.abs[k];
                }
            }
            let target: Vec<T> = abs.iter().map(|&a| rel * a + floor).collect();
            let done = (0..components).all(|k| error[k] <= target[k]);
            if done || panels.len() >= self.options.max_panels {
                let results: Vec<QuadratureResult<T>> = (0..components)
                    .map(|k| QuadratureResult {
                        value: value[k],
                        error_estimate: error[k],
                        panels_used: panels.len(),
                    })
                    .collect();
                if done {
                    return Ok(results);
                }
                let worst = (0..components)
                    .max_by(|&a, &b| {
                        (error[a] / target[a])
                            .partial_cmp(&(error[b] / target[b]))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap_or(0);
                return Err(Error::Quadrature {
                    estimate: value[worst].as_f64(),
                    error: error[worst].as_f64(),
                    requested: self.options.rel_tol,
                    panels: panels.len(),
                });
            }
            // refine the panel contributing most relative to the targets
            let (idx, _) = panels
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let score = (0..components).map(|k| p.error[k] / target[k]).fold(T::zero(), T::max);
                    (i, score)
                })
                .fold(
                    (0, T::neg_infinity()),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            let panel = panels.swap_remove(idx);
            for verts in self.split(&panel.verts) {
                panels.push(self.eval_panel(verts, components, &f, &mut scratch)?);
            }
        }
    }

    pub fn integrate<F>(&self, f: F) -> Result<QuadratureResult<T>>
    where
        F: Fn(&[T]) -> T,
    {
        let r = self.integrate_multi(1, |y, out| out[0] = f(y))?;
        Ok(r[0])
    }

    fn split(&self, verts: &[Vec<T>]) -> Vec<Vec<Vec<T>>> {
        let mid =
            |a: &Vec<T>, b: &Vec<T>| -> Vec<T> { a.iter().zip(b).map(|(&x, &y)| (x + y) * T::lit(0.5)).collect() };
        match self.dim {
            1 => {
                let m = mid(&verts[0], &verts[1]);
                vec![vec![verts[0].clone(), m.clone()], vec![m, verts[1].clone()]]
            }
            _ => {
                let (a, b, c) = (&verts[0], &verts[1], &verts[2]);
                let ab = mid(a, b);
                let bc = mid(b, c);
                let ca = mid(c, a);
                vec![
                    vec![a.clone(), ab.clone(), ca.clone()],
                    vec![ab.clone(), b.clone(), bc.clone()],
                    vec![ca.clone(), bc.clone(), c.clone()],
                    vec![ab, bc, ca],
                ]
            }
        }
    }

    fn eval_panel<F>(&self, verts: Vec<Vec<T>>, components: usize, f: &F, scratch: &mut [T]) -> Result<Panel<T>>
    where
        F: Fn(&[T], &mut [T]),
    {
        let (hi, abs) = self.apply_rule(&self.high, &verts, components, f, scratch);
        let (lo, _) = self.apply_rule(&self.low, &verts, components, f, scratch);
        for k in 0..components {
            if !hi[k].is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite integrand on panel {:?}",
                    verts
                        .iter()
                        .map(|v| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>())
                        .collect::<Vec<_>>()
                )));
            }
        }
        let error = hi.iter().zip(&lo).map(|(&a, &b)| (a - b).abs()).collect();
        Ok(Panel {
            verts,
            value: hi,
            error,
            abs,
        })
    }

    fn apply_rule<F>(
        &self,
        rule: &GaussRule<T>,
        verts: &[Vec<T>],
        components: usize,
        f: &F,
        scratch: &mut [T],
    ) -> (Vec<T>, Vec<T>)
    where
        F: Fn(&[T], &mut [T]),
    {
        let half = T::lit(0.5);
        let mut acc = vec![T::zero(); components];
        let mut abs = vec![T::zero(); components];
        match self.dim {
            1 => {
                let a = verts[0][0];
                let b = verts[1][0];
                let scale = (b - a) * half;
                let mut y = [T::zero()];
                for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                    y[0] = a + (t + T::one()) * scale;
                    f(&y, scratch);
                    for k in 0..components {
                        acc[k] += w * scale * scratch[k];
                        abs[k] += w * scale * scratch[k].abs();
                    }
                }
            }
            _ => {
                let (p0, p1, p2) = (&verts[0], &verts[1], &verts[2]);
                let e1 = [p1[0] - p0[0], p1[1] - p0[1]];
                let e2 = [p2[0] - p1[0], p2[1] - p1[1]];
                let twice_area = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
                let mut y = [T::zero(); 2];
                for (&tu, &wu) in rule.nodes.iter().zip(&rule.weights) {
                    let u = (tu + T::one()) * half;
                    for (&tv, &wv) in rule.nodes.iter().zip(&rule.weights) {
                        let v = (tv + T::one()) * half;
                        y[0] = p0[0] + u * e1[0] + u * v * e2[0];
                        y[1] = p0[1] + u * e1[1] + u * v * e2[1];
                        let w = wu * wv * half * half * u * twice_area;
                        f(&y, scratch);
                        for k in 0..components {
                            acc[k] += w * scratch[k];
                            abs[k] += w * scratch[k].abs();
                        }
                    }
                }
            }
        }
        (acc, abs)
    }
}

/// One-shot adaptive integral of `f` over `P` with the default rule.
pub fn integrate_on_polytope<T, F>(f: F, polytope: &DelzantPolytope, rel_tol: f64) -> Result<QuadratureResult<T>>
where
    T: Real,
    F: Fn(&[T]) -> T,
{
    let options = QuadratureOptions {
        rel_tol,
        ..QuadratureOptions::default()
    };
    PolytopeQuadrature::new(polytope, options)?.integrate(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_rule_is_exact_for_degree_2k_minus_1() {
        for k in [2usize, 5, 8, 16] {
            let rule = GaussRule::<f64>::new(k);
            let wsum: f64 = rule.weights.iter().sum();
            assert_relative_eq!(wsum, 2.0, epsilon = 1e-14);
            for deg in 0..(2 * k) {
                let q: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&x, &w)| w * x.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() <= 1e-13 * exact.abs().max(1.0), "k={k} deg={deg}");
            }
        }
    }

    #[test]
    fn interval_examples() {
        let seg = DelzantPolytope::segment();
        let one = integrate_on_polytope(|_: &[f64]| 1.0, &seg, 1e-8).unwrap();
        assert_relative_eq!(one.value, 1.0, epsilon = 1e-14);
        assert!(one.panels_used >= 1);
        let bump = integrate_on_polytope(|y: &[f64]| y[0] * (1.0 - y[0]), &seg, 1e-8).unwrap();
        assert_relative_eq!(bump.value, 1.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn triangle_examples() {
        let tri = DelzantPolytope::simplex(2).unwrap();
        let area = integrate_on_polytope(|_: &[f64]| 1.0, &tri, 1e-8).unwrap();
        assert_relative_eq!(area.value, 0.5, epsilon = 1e-14);
        // ∫ y1^2 y2 over the simplex = 2!·1!/5! = 1/60
        let m = integrate_on_polytope(|y: &[f64]| y[0] * y[0] * y[1], &tri, 1e-10).unwrap();
        assert_relative_eq!(m.value, 1.0 / 60.0, epsilon = 1e-14);
        let sq = DelzantPolytope::square();
        let v = integrate_on_polytope(|y: &[f64]| (y[0] + y[1]).exp(), &sq, 1e-10).unwrap();
        let e1 = std::f64::consts::E - 1.0;
        assert_relative_eq!(v.value, e1 * e1, max_relative = 1e-12);
    }

    #[test]
    fn polynomial_exactness_on_triangle() {
        // degree ≤ 2k − 1 in each collapsed coordinate: ∫ y1^a y2^b = a! b! / (a+b+2)!
        let tri = DelzantPolytope::simplex(2).unwrap();
        let fact = |n: u32| (1..=n).map(|i| i as f64).product::<f64>();
        for a in 0..6u32 {
            for b in 0..6u32 {
                let r =
                    integrate_on_polytope(|y: &[f64]| y[0].powi(a as i32) * y[1].powi(b as i32), &tri, 1e-12).unwrap();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((r.value - exact).abs() <= 1e-13 * exact, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn peaked_integrand_needs_refinement() {
        // (1 − y)^200 concentrates at the left endpoint; ∫ = 1/201
        let seg = DelzantPolytope::segment();
        let r = integrate_on_polytope(|y: &[f64]| (1.0 - y[0]).powi(200), &seg, 1e-10).unwrap();
        assert_relative_eq!(r.value, 1.0 / 201.0, max_relative = 1e-11);
        assert!(r.panels_used > 4);
    }

    #[test]
    fn budget_exhaustion_reports_estimate() {
        let seg = DelzantPolytope::segment();
        let q = PolytopeQuadrature::new(
            &seg,
            QuadratureOptions {
                max_panels: 4,
                rel_tol: 1e-14,
                ..QuadratureOptions::default()
            },
        )
        .unwrap();
        let err = q.integrate(|y: &[f64]| (1.0 - y[0]).powi(400)).unwrap_err();
        match err {
            Error::Quadrature { estimate, panels, .. } => {
                assert!(estimate > 0.0);
                assert_eq!(panels, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_precision_rule() {
        let seg = DelzantPolytope::segment();
        let r = integrate_on_polytope(|y: &[f32]| y[0] * (1.0 - y[0]), &seg, 1e-5).unwrap();
        assert!((r.value - 1.0 / 6.0).abs() < 1e-6);
    }
}
