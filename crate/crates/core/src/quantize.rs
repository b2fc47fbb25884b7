//! Toric Toeplitz quantization at level `N`: norming constants `Q(α)`,
//! eigenvalues `μ_{N,α}`, the quantum potentials `φ_N`, `φ̃_N` and the error
//! field `E_N = φ̃_N − φ_s`.
//!
//! Integrals are taken over `P` in moment coordinates with measure `dy`
//! exactly; no volume, `Nⁿ` or torus normalization is applied. Such factors
//! would shift every `φ_N` by `O(log N / N)`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::field::ScalarField;
use crate::geodesic::{GeodesicRay, ProblemData};
use crate::numerics::lse::log_sum_exp_unweighted;
use crate::numerics::quadrature::{PolytopeQuadrature, QuadratureOptions};
use crate::polytope::LatticeSet;
use crate::Real;

/// Spectral data of one quantization level.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralLevel<T> {
    pub level: u32,
    pub lattice: LatticeSet,
    /// `log Q(α)`, stored in log form so large `N` never underflows.
    pub log_q: Vec<T>,
    pub mu: Vec<T>,
    /// Relative quadrature error estimate of `Q(α)`.
    pub q_err: Vec<T>,
    /// `u̇0(α/N)`
    pub udot_at_lattice: Vec<T>,
}

/// Which eigenvalue enters the exponent of the level-`N` sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    /// `s·N·μ_{N,α}`
    Toeplitz,
    /// `−s·N·u̇0(α/N)`
    Symbol,
}

struct AlphaData<T> {
    log_q: T,
    mu: T,
    q_err: T,
    udot: T,
}

/// `log Q(α)`, `μ_{N,α}` and the error estimate for one lattice point, using
/// shared quadrature nodes for both integrals.
fn alpha_integrals<T: Real>(
    problem: &ProblemData<T>,
    quad: &PolytopeQuadrature<T>,
    level: u32,
    alpha: &[i64],
) -> Result<AlphaData<T>> {
    let p = problem.polytope();
    let u0 = problem.u0();
    let udot = problem.udot0();
    let n_real = T::from_int(level as i64);
    let a: Vec<T> = alpha.iter().map(|&v| T::from_int(v) / n_real).collect();
    // exact integers c_k = N·l_k(α/N)
    let c: Vec<T> = p
        .scaled_facet_values(alpha, level)
        .into_iter()
        .map(T::from_int)
        .collect();
    let smooth = u0.smooth_part();
    let guillemin = u0.has_guillemin();
    // Φ(y) = N(u0 + ⟨α/N − y, ∇u0⟩) ≤ N·u0(α/N) by convexity
    let phi_max = n_real * u0.value(&a)?;
    let udot_a = udot.value(&a)?;
    let exponent = |y: &[T]| -> T {
        let mut e = T::zero();
        if guillemin {
            for (lk, &ck) in p.facet_values_unchecked(y).into_iter().zip(&c) {
                e += if ck > T::zero() {
                    ck * lk.ln() + ck - n_real * lk
                } else {
                    -n_real * lk
                };
            }
        }
        if !smooth.is_zero() {
            let g = smooth.eval_gradient(y);
            let lin = a
                .iter()
                .zip(y)
                .zip(&g)
                .fold(T::zero(), |acc, ((&ai, &yi), &gi)| acc + (ai - yi) * gi);
            e += n_real * (smooth.eval(y) + lin);
        }
        e - phi_max
    };
    let results = quad.integrate_multi(2, |y, out| {
        let w = exponent(y).exp();
        out[0] = w;
        out[1] = match udot.value(y) {
            Ok(v) => (v - udot_a) * w,
            Err(_) => T::nan(),
        };
    })?;
    let mass = results[0].value;
    if !(mass > T::zero()) || !mass.is_finite() {
        return Err(Error::numerical(format!(
            "norming integral {mass} is not positive for alpha {alpha:?} at N = {level}"
        )));
    }
    let shift = results[1].value / mass;
    if !shift.is_finite() {
        return Err(Error::numerical(format!(
            "eigenvalue integral failed for alpha {alpha:?}"
        )));
    }
    Ok(AlphaData {
        log_q: phi_max + mass.ln(),
        mu: -(udot_a + shift),
        q_err: results[0].error_estimate / mass,
        udot: udot_a,
    })
}

/// `Q(α) = ∫_P e^{N(u0 + ⟨α/N − y, ∇u0⟩)} dy`
pub fn norming_constant<T: Real>(problem: &ProblemData<T>, level: u32, alpha: &[i64]) -> Result<T> {
    Ok(log_norming_constant(problem, level, alpha)?.exp())
}

pub fn log_norming_constant<T: Real>(problem: &ProblemData<T>, level: u32, alpha: &[i64]) -> Result<T> {
    let quad = checked_quadrature(problem, level, alpha, QuadratureOptions::default())?;
    Ok(alpha_integrals(problem, &quad, level, alpha)?.log_q)
}

/// `μ_{N,α}`, the normalized average of `−u̇0` against the `Q(α)` density.
pub fn toeplitz_eigenvalue<T: Real>(problem: &ProblemData<T>, level: u32, alpha: &[i64]) -> Result<T> {
    let quad = checked_quadrature(problem, level, alpha, QuadratureOptions::default())?;
    Ok(alpha_integrals(problem, &quad, level, alpha)?.mu)
}

fn checked_quadrature<T: Real>(
    problem: &ProblemData<T>,
    level: u32,
    alpha: &[i64],
    options: QuadratureOptions,
) -> Result<PolytopeQuadrature<T>> {
    check_dim(problem.dim(), alpha.len())?;
    if level == 0 {
        return Err(Error::input("lattice level N must be at least 1"));
    }
    if problem
        .polytope()
        .scaled_facet_values(alpha, level)
        .iter()
        .any(|&c| c < 0)
    {
        return Err(Error::input(format!("alpha {alpha:?} is not in N·P for N = {level}")));
    }
    PolytopeQuadrature::new(problem.polytope(), options)
}

impl<T: Real> SpectralLevel<T> {
    pub fn compute(problem: &ProblemData<T>, level: u32) -> Result<Self> {
        Self::compute_with(problem, level, QuadratureOptions::default())
    }

    /// Per-α integrals run as an order-preserving parallel map.
    pub fn compute_with(problem: &ProblemData<T>, level: u32, options: QuadratureOptions) -> Result<Self> {
        let lattice = problem.polytope().lattice_points(level)?;
        let quad = PolytopeQuadrature::new(problem.polytope(), options)?;
        let data: Vec<AlphaData<T>> = lattice
            .points
            .par_iter()
            .map(|alpha| alpha_integrals(problem, &quad, level, alpha))
            .collect::<Result<_>>()?;
        log::debug!("level {level}: {} lattice points", lattice.len());
        Ok(Self {
            level,
            log_q: data.iter().map(|d| d.log_q).collect(),
            mu: data.iter().map(|d| d.mu).collect(),
            q_err: data.iter().map(|d| d.q_err).collect(),
            udot_at_lattice: data.iter().map(|d| d.udot).collect(),
            lattice,
        })
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// `(1/N) log Σ_α e^{E_α(s) + ⟨x,α⟩ − log Q(α)}` in lexicographic order.
    pub fn log_sum(&self, kind: Exponent, s: T, x: &[T]) -> Result<T> {
        if self.is_empty() {
            return Err(Error::input("empty lattice"));
        }
        if let Some(a) = self.lattice.points.first() {
            check_dim(a.len(), x.len())?;
        }
        let n_real = T::from_int(self.level as i64);
        let exps: Vec<T> = (0..self.len())
            .map(|i| {
                let e = match kind {
                    Exponent::Toeplitz => s * n_real * self.mu[i],
                    Exponent::Symbol => -s * n_real * self.udot_at_lattice[i],
                };
                let xa = self.lattice.points[i]
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &xi)| acc + T::from_int(a) * xi);
                e + xa - self.log_q[i]
            })
            .collect();
        Ok(log_sum_exp_unweighted(&exps)? / n_real)
    }

    /// `φ_N(s, x)` given `ψ0(x)`.
    pub fn phi_n(&self, s: T, x: &[T], psi0_x: T) -> Result<T> {
        Ok(self.log_sum(Exponent::Toeplitz, s, x)? - psi0_x)
    }

    /// `φ̃_N(s, x)` given `ψ0(x)`.
    pub fn tilde_phi_n(&self, s: T, x: &[T], psi0_x: T) -> Result<T> {
        Ok(self.log_sum(Exponent::Symbol, s, x)? - psi0_x)
    }

    /// `E_N(s, x) = φ̃_N(s, x) − φ_s(x)` given `ψ_s(x)`.
    pub fn error_field(&self, s: T, x: &[T], psi_s_x: T) -> Result<T> {
        Ok(self.log_sum(Exponent::Symbol, s, x)? - psi_s_x)
    }

    /// `φ_N(s, x) − φ_s(x)` given `ψ_s(x)`.
    pub fn phi_n_error(&self, s: T, x: &[T], psi_s_x: T) -> Result<T> {
        Ok(self.log_sum(Exponent::Toeplitz, s, x)? - psi_s_x)
    }

    /// `max_α |μ_{N,α} + u̇0(α/N)|`
    pub fn eigenvalue_gap(&self) -> T {
        self.mu
            .iter()
            .zip(&self.udot_at_lattice)
            .fold(T::zero(), |m, (&mu, &u)| m.max((mu + u).abs()))
    }

    /// `max |(1/N) log Q(α) − u0(α/N)|` over lattice points at distance more
    /// than `min_distance` from `∂P`.
    pub fn q_asymptotic_deviation(&self, problem: &ProblemData<T>, min_distance: T) -> Result<T> {
        let n_real = T::from_int(self.level as i64);
        let mut worst = T::zero();
        for i in 0..self.len() {
            let a = self.lattice.scaled::<T>(i);
            if problem.polytope().boundary_distance(&a)? <= min_distance {
                continue;
            }
            let d = (self.log_q[i] / n_real - problem.u0().value(&a)?).abs();
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// CSV with columns `N, alpha, Q, mu, q_err`; `alpha` is semicolon-joined.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["N", "alpha", "Q", "mu", "q_err"])?;
        for i in 0..self.len() {
            let alpha = join_alpha(&self.lattice.points[i]);
            w.write_record([
                self.level.to_string(),
                alpha,
                format!("{:.16e}", self.log_q[i].exp()),
                format!("{:.16e}", self.mu[i]),
                format!("{:.16e}", self.q_err[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reloads a level written by [`Self::write_csv`], checking that the
    /// lattice matches `problem` at the stored level.
    pub fn read_csv(path: &Path, problem: &ProblemData<T>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut level = None;
        let mut points = Vec::new();
        let (mut log_q, mut mu, mut q_err) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::input(format!("expected 5 columns, found {}", rec.len())));
            }
            let n: u32 = parse_field(&rec[0], "N")?;
            if *level.get_or_insert(n) != n {
                return Err(Error::input("mixed levels in one spectral file"));
            }
            let alpha = rec[1]
                .split(';')
                .map(|t| parse_field::<i64>(t, "alpha"))
                .collect::<Result<Vec<_>>>()?;
            points.push(alpha);
            let q: f64 = parse_field(&rec[2], "Q")?;
            log_q.push(T::lit(q.ln()));
            mu.push(T::lit(parse_field(&rec[3], "mu")?));
            q_err.push(T::lit(parse_field(&rec[4], "q_err")?));
        }
        let level = level.ok_or_else(|| Error::input("spectral file has no rows"))?;
        let lattice = problem.polytope().lattice_points(level)?;
        if lattice.points != points {
            return Err(Error::Consistency(format!(
                "cached lattice does not match the problem at N = {level}"
            )));
        }
        let udot_at_lattice = (0..lattice.len())
            .map(|i| problem.udot0().value(&lattice.scaled::<T>(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            level,
            lattice,
            log_q,
            mu,
            q_err,
            udot_at_lattice,
        })
    }
}

fn join_alpha(a: &[i64]) -> String {
    a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn parse_field<V: std::str::FromStr>(s: &str, what: &str) -> Result<V> {
    s.trim()
        .parse()
        .map_err(|_| Error::input(format!("cannot parse {what} field {s:?}")))
}

/// `φ_N(s, x)` with `ψ0` from the ray.
pub fn phi_n<T: Real>(ray: &GeodesicRay<'_, T>, level: &SpectralLevel<T>, s: T, x: &[T]) -> Result<T> {
    level.phi_n(s, x, ray.psi0(x)?)
}

pub fn tilde_phi_n<T: Real>(ray: &GeodesicRay<'_, T>, level: &SpectralLevel<T>, s: T, x: &[T]) -> Result<T> {
    level.tilde_phi_n(s, x, ray.psi0(x)?)
}

pub fn error_field<T: Real>(ray: &GeodesicRay<'_, T>, level: &SpectralLevel<T>, s: T, x: &[T]) -> Result<T> {
    level.error_field(s, x, ray.psi_value(s, x)?)
}

/// `sup_{N ≥ l} φ_N(s, x)` over the computed levels.
pub fn quantum_potential_estimate<T: Real>(levels: &[SpectralLevel<T>], l: u32, s: T, x: &[T], psi0_x: T) -> Result<T> {
    let mut best: Option<T> = None;
    for lev in levels.iter().filter(|lev| lev.level >= l) {
        let v = lev.phi_n(s, x, psi0_x)?;
        best = Some(best.map_or(v, |b: T| b.max(v)));
    }
    best.ok_or_else(|| Error::input(format!("no computed level with N ≥ {l}")))
}

/// `ψ` and `ψ0` tabulated on an `(s, x)` grid, shared across levels.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiTable<T> {
    pub s: Vec<T>,
    pub x: Vec<Vec<T>>,
    /// `ψ(s_i, x_j)` at index `i·x.len() + j`.
    pub psi: Vec<T>,
    pub psi0: Vec<T>,
}

impl<T: Real> PsiTable<T> {
    pub fn build(ray: &GeodesicRay<'_, T>, s: Vec<T>, x: Vec<Vec<T>>) -> Result<Self> {
        if s.is_empty() || x.is_empty() {
            return Err(Error::input("empty evaluation grid"));
        }
        let nx = x.len();
        let psi: Vec<T> = (0..s.len() * nx)
            .into_par_iter()
            .map(|k| ray.psi_value(s[k / nx], &x[k % nx]))
            .collect::<Result<_>>()?;
        let psi0: Vec<T> = x.par_iter().map(|xj| ray.psi0(xj)).collect::<Result<_>>()?;
        Ok(Self { s, x, psi, psi0 })
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn psi_at(&self, i: usize, j: usize) -> T {
        self.psi[i * self.x.len() + j]
    }
}

/// Every level-`N` field on a [`PsiTable`] grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGrid<T> {
    pub phi_n: Vec<T>,
    pub tilde_phi_n: Vec<T>,
    pub error: Vec<T>,
    pub phi: Vec<T>,
}

impl<T: Real> LevelGrid<T> {
    pub fn evaluate(level: &SpectralLevel<T>, table: &PsiTable<T>) -> Result<Self> {
        let nx = table.x.len();
        let rows: Vec<[T; 4]> = (0..table.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / nx, k % nx);
                let (s, x) = (table.s[i], &table.x[j]);
                let psi = table.psi[k];
                let psi0 = table.psi0[j];
                let toeplitz = level.log_sum(Exponent::Toeplitz, s, x)?;
                let symbol = level.log_sum(Exponent::Symbol, s, x)?;
                Ok([toeplitz - psi0, symbol - psi0, symbol - psi, psi - psi0])
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            phi_n: rows.iter().map(|r| r[0]).collect(),
            tilde_phi_n: rows.iter().map(|r| r[1]).collect(),
            error: rows.iter().map(|r| r[2]).collect(),
            phi: rows.iter().map(|r| r[3]).collect(),
        })
    }

    /// `max |E_N|`
    pub fn sup_error(&self) -> T {
        self.error.iter().fold(T::zero(), |m, &e| m.max(e.abs()))
    }

    /// `max E_N`, the one-sided bound.
    pub fn max_error(&self) -> T {
        self.error.iter().fold(T::neg_infinity(), |m, &e| m.max(e))
    }

    /// `max |φ̃_N − φ_N|`
    pub fn comparison_gap(&self) -> T {
        self.phi_n
            .iter()
            .zip(&self.tilde_phi_n)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// `sup |E_N|` over the grid of `table`.
pub fn sup_error<T: Real>(level: &SpectralLevel<T>, table: &PsiTable<T>) -> Result<T> {
    Ok(LevelGrid::evaluate(level, table)?.sup_error())
}

/// One-parameter least-squares fit `e_N ≈ C·log N / N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit<T> {
    pub c: T,
    /// `max_N |e_N − C·g_N| / e_N`
    pub residual: T,
}

impl<T: Real> RateFit<T> {
    pub fn fit(levels: &[u32], errors: &[T]) -> Result<Self> {
        if levels.len() != errors.len() {
            return Err(Error::DimensionMismatch {
                expected: levels.len(),
                got: errors.len(),
            });
        }
        if levels.len() < 3 {
            return Err(Error::input("rate fit needs at least three levels"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) || levels[0] == 0 {
            return Err(Error::input("levels must be positive and strictly increasing"));
        }
        let e: Vec<T> = errors.iter().map(|&v| v.max(T::epsilon())).collect();
        let g: Vec<T> = levels.iter().map(|&n| rate_shape(n)).collect();
        let num = e.iter().zip(&g).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        let den = g.iter().fold(T::zero(), |acc, &b| acc + b * b);
        let c = num / den;
        let residual = e
            .iter()
            .zip(&g)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - c * b).abs() / a));
        Ok(Self { c, residual })
    }

    /// True when the residual is within `band`.
    pub fn is_adequate(&self, band: T) -> bool {
        self.residual <= band
    }
}

/// `log N / N`
pub fn rate_shape<T: Real>(n: u32) -> T {
    let n = T::from_int(n as i64);
    n.ln() / n
}

pub fn rate_fit<T: Real>(levels: &[u32], errors: &[T]) -> Result<RateFit<T>> {
    RateFit::fit(levels, errors)
}

/// Uniform grid `a, a + step, …` up to `b` inclusive (within half a step).
pub fn uniform_grid<T: Real>(a: T, b: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !(b >= a) {
        return Err(Error::input("grid needs a positive step and b ≥ a"));
    }
    let count = ((b - a) / step + T::lit(0.5)).floor().to_usize().unwrap_or(0);
    Ok((0..=count).map(|i| a + step * T::from_usize(i).unwrap()).collect())
}

/// `count` evenly spaced points on `[a, b]`.
pub fn linspace<T: Real>(a: T, b: T, count: usize) -> Vec<T> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    b
                } else {
                    a + (b - a) * T::from_usize(i).unwrap() / T::from_usize(count - 1).unwrap()
                }
            })
            .collect(),
    }
}

/// Writes `s, x, <columns>` rows over the grid of `table`; coordinates of
/// `x` are semicolon-joined when `n > 1`.
pub fn write_field_csv<T: Real>(path: &Path, table: &PsiTable<T>, columns: &[(&str, &[T])]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    let mut header = vec!["s".to_string(), "x".to_string()];
    header.extend(columns.iter().map(|(h, _)| h.to_string()));
    writeln!(f, "{}", header.join(","))?;
    let nx = table.x.len();
    for k in 0..table.len() {
        let x = table.x[k % nx]
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(";");
        write!(f, "{:.16e},{x}", table.s[k / nx])?;
        for (_, col) in columns {
            write!(f, ",{:.16e}", col[k])?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Polynomial, PotentialField};
    use crate::polytope::DelzantPolytope;
    use approx::assert_relative_eq;

    fn ln_beta(a: u32, b: u32) -> f64 {
        // exact factorial ratio a'! b'! / (a'+b'+1)! for integer Beta(a, b)
        let lf = |k: u32| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        lf(a - 1) + lf(b - 1) - lf(a + b - 1)
    }

    fn segment_problem(velocity: Polynomial<f64>) -> ProblemData<f64> {
        let seg = DelzantPolytope::segment();
        ProblemData::new(
            PotentialField::guillemin(seg.clone()),
            PotentialField::smooth(seg, velocity).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn beta_examples() {
        let prob = ProblemData::<f64>::flagship();
        assert_relative_eq!(
            norming_constant(&prob, 2, &[1]).unwrap(),
            1.0 / 6.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(norming_constant(&prob, 1, &[0]).unwrap(), 0.5, max_relative = 1e-12);
        let lev = SpectralLevel::compute(&prob, 9).unwrap();
        for a in 0..=9usize {
            assert_relative_eq!(lev.log_q[a], lev.log_q[9 - a], epsilon = 1e-10);
            assert_relative_eq!(lev.log_q[a], ln_beta(a as u32 + 1, 10 - a as u32), epsilon = 1e-9);
        }
        assert!(norming_constant(&prob, 2, &[3]).is_err());
    }

    #[test]
    fn eigenvalue_examples() {
        let prob = segment_problem(Polynomial::affine(&[1.0], 0.0));
        assert_relative_eq!(toeplitz_eigenvalue(&prob, 2, &[1]).unwrap(), -0.5, epsilon = 1e-12);
        let lev = SpectralLevel::compute(&prob, 2).unwrap();
        assert_relative_eq!(lev.eigenvalue_gap(), 0.25, epsilon = 1e-12);
        let flag = ProblemData::<f64>::flagship();
        let lev = SpectralLevel::compute(&flag, 1).unwrap();
        assert_relative_eq!(lev.mu[0], -1.0 / 6.0, epsilon = 1e-13);
        assert_relative_eq!(lev.mu[1], -1.0 / 6.0, epsilon = 1e-13);
        let c = segment_problem(Polynomial::constant(1, 0.7));
        let lev = SpectralLevel::compute(&c, 12).unwrap();
        assert!(lev.mu.iter().all(|&m| m == -0.7));
        assert_eq!(lev.eigenvalue_gap(), 0.0);
    }

    #[test]
    fn eigenvalues_stay_in_velocity_range() {
        let flag = ProblemData::<f64>::flagship();
        let lev = SpectralLevel::compute(&flag, 40).unwrap();
        assert!(lev.mu.iter().all(|&m| (-0.25..=0.0).contains(&m)));
    }

    #[test]
    fn level_one_closed_forms() {
        let flag = ProblemData::<f64>::flagship();
        let ray = GeodesicRay::new(&flag);
        let lev = SpectralLevel::compute(&flag, 1).unwrap();
        let ln2 = std::f64::consts::LN_2;
        for &(s, x) in &[(0.0, 0.0), (1.3, -2.0), (2.9, 5.0)] {
            assert_relative_eq!(phi_n(&ray, &lev, s, &[x]).unwrap(), ln2 - s / 6.0, epsilon = 1e-12);
            assert_relative_eq!(tilde_phi_n(&ray, &lev, s, &[x]).unwrap(), ln2, epsilon = 1e-12);
        }
        let e = error_field(&ray, &lev, 1.0, &[0.0]).unwrap();
        assert_relative_eq!(e, ln2 - ray.phi(1.0, &[0.0]).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn zero_velocity_is_static() {
        let prob = segment_problem(Polynomial::zero(1));
        let ray = GeodesicRay::new(&prob);
        let lev = SpectralLevel::compute(&prob, 8).unwrap();
        let a = phi_n(&ray, &lev, 0.0, &[0.7]).unwrap();
        let b = phi_n(&ray, &lev, 2.5, &[0.7]).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            error_field(&ray, &lev, 0.0, &[0.7]).unwrap(),
            error_field(&ray, &lev, 2.5, &[0.7]).unwrap()
        );
    }

    #[test]
    fn rate_fit_examples() {
        let levels = [8u32, 16, 32];
        let e: Vec<f64> = levels.iter().map(|&n| 3.0 * rate_shape::<f64>(n)).collect();
        let fit = rate_fit(&levels, &e).unwrap();
        assert_relative_eq!(fit.c, 3.0, epsilon = 1e-12);
        assert!(fit.residual <= 1e-12);
        let ladder = [8u32, 16, 32, 64, 128];
        let inv: Vec<f64> = ladder.iter().map(|&n| 1.0 / n as f64).collect();
        assert!(!rate_fit(&ladder, &inv).unwrap().is_adequate(0.5));
        assert!(rate_fit(&[16, 8, 32], &e).is_err());
        assert!(rate_fit(&[8, 16], &e[..2]).is_err());
        let floored: RateFit<f64> = rate_fit(&levels, &[0.0, -1.0, 0.1]).unwrap();
        assert!(floored.residual.is_finite());
    }

    #[test]
    fn running_sup_is_monotone() {
        let flag = ProblemData::<f64>::flagship();
        let ray = GeodesicRay::new(&flag);
        let levels: Vec<_> = [1, 2]
            .iter()
            .map(|&n| SpectralLevel::compute(&flag, n).unwrap())
            .collect();
        let psi0 = ray.psi0(&[0.4]).unwrap();
        let a = quantum_potential_estimate(&levels, 1, 1.0, &[0.4], psi0).unwrap();
        let b = quantum_potential_estimate(&levels, 2, 1.0, &[0.4], psi0).unwrap();
        assert!(a >= b);
        assert_eq!(b, levels[1].phi_n(1.0, &[0.4], psi0).unwrap());
        assert!(quantum_potential_estimate(&levels, 3, 1.0, &[0.4], psi0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let flag = ProblemData::<f64>::flagship();
        let lev = SpectralLevel::compute(&flag, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("level.csv");
        lev.write_csv(&path).unwrap();
        let back = SpectralLevel::read_csv(&path, &flag).unwrap();
        assert_eq!(back.lattice, lev.lattice);
        for i in 0..lev.len() {
            assert_relative_eq!(back.log_q[i], lev.log_q[i], epsilon = 1e-14);
            assert_eq!(back.mu[i], lev.mu[i]);
        }
        let other = segment_problem(Polynomial::zero(1));
        assert!(SpectralLevel::read_csv(&path, &other).is_ok());
        let tri = ProblemData::new(
            PotentialField::<f64>::guillemin(DelzantPolytope::simplex(2).unwrap()),
            PotentialField::smooth(DelzantPolytope::simplex(2).unwrap(), Polynomial::zero(2)).unwrap(),
        )
        .unwrap();
        assert!(SpectralLevel::read_csv(&path, &tri).is_err());
    }

    #[test]
    fn triangle_level() {
        let tri = DelzantPolytope::simplex(2).unwrap();
        let prob = ProblemData::new(
            PotentialField::guillemin(tri.clone()),
            PotentialField::smooth(tri, Polynomial::affine(&[1.0, 0.0], 0.0)).unwrap(),
        )
        .unwrap();
        let lev: SpectralLevel<f64> = SpectralLevel::compute(&prob, 3).unwrap();
        assert_eq!(lev.len(), 10);
        // Dirichlet integral: ∫ y1^a y2^b (1−y1−y2)^c = a! b! c! / (N+2)!
        let f = |k: i64| (1..=k).map(|i| i as f64).product::<f64>();
        for (i, a) in lev.lattice.points.iter().enumerate() {
            let c = 3 - a[0] - a[1];
            let q = f(a[0]) * f(a[1]) * f(c) / f(5);
            assert_relative_eq!(lev.log_q[i].exp(), q, max_relative = 1e-9);
            // mean of y1 under the Dirichlet weight is (a+1)/(N+3)
            assert_relative_eq!(lev.mu[i], -((a[0] + 1) as f64) / 6.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn grids() {
        let g = uniform_grid(0.0, 3.0, 0.05).unwrap();
        assert_eq!(g.len(), 61);
        assert_relative_eq!(*g.last().unwrap(), 3.0, epsilon = 1e-12);
        let l = linspace(-6.0, 6.0, 5);
        assert_eq!(l, vec![-6.0, -3.0, 0.0, 3.0, 6.0]);
        assert!(uniform_grid(1.0, 0.0, 0.1).is_err());
    }
}
