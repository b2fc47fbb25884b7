use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use hrma_core::ma_measure::{alexandrov_measure_with, MeasureOptions};
use hrma_core::quantize::{linspace, rate_fit, rate_shape, uniform_grid, write_field_csv, LevelGrid, PsiTable};
use hrma_core::{
    mass_split, min_hessian_eigenvalue, pl_convexify, GeodesicRay, LegendreOptions, ProblemF64, RayOptions,
    SpectralLevelF64,
};

use crate::config::StudyConfig;
use crate::error::{CliError, CliResult};
use crate::plot;

/// Model-adequacy band for the `C·log N / N` fit.
pub const RATE_FIT_BAND: f64 = 0.5;

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Tensor grid over `[−X, X]ⁿ` with the last coordinate varying fastest.
pub fn window_points(axis: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn ray_options(legendre: &LegendreOptions) -> RayOptions {
    RayOptions {
        legendre: legendre.clone(),
        ..RayOptions::default()
    }
}

pub fn cache_dir(config: &StudyConfig) -> Option<PathBuf> {
    config.output.cache.as_ref().map(|c| c.join(config.problem_hash()))
}

fn level_path(dir: &Path, n: u32) -> PathBuf {
    dir.join(format!("level_{n}.csv"))
}

/// Loads level `n` from the cache when present, computing (and storing) it
/// otherwise. Returns the level and whether it came from the cache.
pub fn load_or_compute(
    config: &StudyConfig,
    problem: &ProblemF64,
    n: u32,
    cache: Option<&Path>,
) -> CliResult<(SpectralLevelF64, bool)> {
    if let Some(dir) = cache {
        let path = level_path(dir, n);
        if path.exists() {
            match SpectralLevelF64::read_csv(&path, problem) {
                Ok(level) => return Ok((level, true)),
                Err(e) => log::warn!("ignoring unreadable cache file {}: {e}", path.display()),
            }
        }
    }
    let level = SpectralLevelF64::compute_with(problem, n, config.quadrature)?;
    if let Some(dir) = cache {
        ensure_dir(dir)?;
        let path = level_path(dir, n);
        level.write_csv(&path).map_err(|e| io_or(e, &path))?;
    }
    Ok((level, false))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary {
    pub level: u32,
    pub sup_error: f64,
    pub max_error: f64,
    pub eigenvalue_gap: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<LevelSummary>,
    /// `(C, residual)` when the ladder has at least three levels.
    pub fit: Option<(f64, f64)>,
    pub files: Vec<PathBuf>,
}

pub fn run_convergence_study(config: &StudyConfig) -> CliResult<ConvergenceReport> {
    let out = &config.output.dir;
    ensure_dir(out)?;
    let problem = config.problem.build()?;
    let n = problem.dim();
    let ray = GeodesicRay::with_options(&problem, ray_options(&config.legendre));
    let g = &config.grid;
    let s = uniform_grid(0.0, g.t, g.s_step)?;
    let axis = uniform_grid(-g.x_window, g.x_window, g.x_step)?;
    let x = window_points(&axis, n);
    log::info!("tabulating ψ on {} × {} points", s.len(), x.len());
    let table = PsiTable::build(&ray, s, x)?;

    let cache = cache_dir(config);
    let mut rows = Vec::with_capacity(config.ladder.len());
    let mut files = Vec::new();
    for &level in &config.ladder {
        let (spectral, cached) = load_or_compute(config, &problem, level, cache.as_deref())?;
        log::info!(
            "N = {level}: {} lattice points{}",
            spectral.len(),
            if cached { " (cached)" } else { "" }
        );
        let fields = LevelGrid::evaluate(&spectral, &table)?;
        let path = out.join(format!("converge_N{level}.csv"));
        write_field_csv(
            &path,
            &table,
            &[
                ("phi_N", &fields.phi_n),
                ("tilde_phi_N", &fields.tilde_phi_n),
                ("E_N", &fields.error),
                ("phi", &fields.phi),
            ],
        )
        .map_err(|e| io_or(e, &path))?;
        files.push(path);
        rows.push(LevelSummary {
            level,
            sup_error: fields.sup_error(),
            max_error: fields.max_error(),
            eigenvalue_gap: spectral.eigenvalue_gap(),
        });
    }

    let fit = if rows.len() >= 3 {
        let levels: Vec<u32> = rows.iter().map(|r| r.level).collect();
        let errors: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
        let f = rate_fit(&levels, &errors)?;
        Some((f.c, f.residual))
    } else {
        None
    };

    let mut summary = String::from("N,sup_error,max_error,eigenvalue_gap,local_C,fitted_C\n");
    for r in &rows {
        let local = r.sup_error / rate_shape::<f64>(r.level);
        let fitted = fit.map_or_else(|| "nan".to_string(), |(c, _)| format!("{c:.16e}"));
        writeln!(
            summary,
            "{},{:.16e},{:.16e},{:.16e},{local:.16e},{fitted}",
            r.level, r.sup_error, r.max_error, r.eigenvalue_gap
        )
        .unwrap();
    }
    let path = out.join("summary.csv");
    write_text(&path, &summary)?;
    files.push(path);

    let mut report = String::new();
    match fit {
        Some((c, res)) => {
            writeln!(report, "fitted_C = {c:.10}").unwrap();
            writeln!(report, "residual = {res:.6}").unwrap();
            writeln!(report, "adequate = {} (band {RATE_FIT_BAND})", res <= RATE_FIT_BAND).unwrap();
        }
        None => writeln!(report, "fit skipped: fewer than three levels").unwrap(),
    }
    let decreasing = rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    writeln!(report, "sup_error_strictly_decreasing = {decreasing}").unwrap();
    let path = out.join("fit.txt");
    write_text(&path, &report)?;
    files.push(path);

    if config.output.plot && rows.len() >= 2 {
        let path = out.join("sup_error.svg");
        plot::sup_error_plot(&path, &rows, fit.map(|f| f.0)).map_err(|e| CliError::io(&path, e))?;
        files.push(path);
    }
    Ok(ConvergenceReport { rows, fit, files })
}

fn io_or(e: hrma_core::Error, path: &Path) -> CliError {
    match e {
        hrma_core::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    }
}

pub fn run_spectral_cache(config: &StudyConfig) -> CliResult<Vec<(u32, bool)>> {
    let dir = match cache_dir(config) {
        Some(d) => d,
        None => config.output.dir.join("cache").join(config.problem_hash()),
    };
    ensure_dir(&dir)?;
    let problem = config.problem.build()?;
    let mut out = Vec::with_capacity(config.ladder.len());
    for &n in &config.ladder {
        let (_, cached) = load_or_compute(config, &problem, n, Some(&dir))?;
        out.push((n, cached));
    }
    let mut manifest = format!("hash = {}\n", config.problem_hash());
    for (n, cached) in &out {
        writeln!(manifest, "N = {n}: {}", if *cached { "loaded" } else { "computed" }).unwrap();
    }
    write_text(&dir.join("manifest.txt"), &manifest)?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LifespanReport {
    pub time: f64,
    pub binding_point: Option<Vec<f64>>,
    /// `(s, min over P of λ_min, argmin)`
    pub profile: Vec<(f64, f64, Vec<f64>)>,
    /// `(s, flagged points, scanned points)`
    pub singular_scan: Vec<(f64, usize, usize)>,
    pub text: String,
}

fn fmt_time(t: f64) -> String {
    if t.is_infinite() {
        "inf".to_string()
    } else {
        format!("{t:.10}")
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.10}")).collect();
    parts.join(";")
}

/// Interior sample of `P`: scaled lattice points at `level` off the boundary.
fn interior_sample(problem: &ProblemF64, level: u32) -> CliResult<Vec<Vec<f64>>> {
    let p = problem.polytope();
    let lattice = p.lattice_points(level)?;
    let pts: Vec<Vec<f64>> = (0..lattice.len())
        .map(|k| lattice.scaled::<f64>(k))
        .filter(|y| p.contains_strictly(y))
        .collect();
    Ok(pts)
}

pub fn run_lifespan_report(config: &StudyConfig) -> CliResult<LifespanReport> {
    let out = &config.output.dir;
    ensure_dir(out)?;
    let problem = config.problem.build()?;
    let life = problem.lifespan()?.clone();
    let t = life.time;
    let n = problem.dim();

    let sample = interior_sample(&problem, if n == 1 { 400 } else { 40 })?;
    let times: Vec<f64> = if t.is_finite() {
        vec![0.0, 0.5 * t, t, 1.5 * t]
    } else {
        vec![0.0, 0.5 * config.grid.t, config.grid.t, 1.5 * config.grid.t]
    };
    let mut profile = Vec::with_capacity(times.len());
    let mut csv = String::from("s,y,min_eigenvalue\n");
    for &s in &times {
        let path = problem.path(s);
        let mut best = (f64::INFINITY, Vec::new());
        for y in &sample {
            let lam = min_hessian_eigenvalue(&path, y)?;
            writeln!(csv, "{s:.16e},{},{lam:.16e}", fmt_point(y)).unwrap();
            if lam < best.0 {
                best = (lam, y.clone());
            }
        }
        profile.push((s, best.0, best.1));
    }
    write_text(&out.join("lifespan_profile.csv"), &csv)?;

    let scan_times: Vec<f64> = if t.is_finite() {
        vec![1.25 * t, 1.5 * t]
    } else {
        vec![config.grid.t]
    };
    let ray = GeodesicRay::with_options(&problem, ray_options(&config.legendre));
    let axis = uniform_grid(-config.grid.x_window, config.grid.x_window, config.grid.x_step)?;
    let xs = window_points(&axis, n);
    let mut scan = Vec::with_capacity(scan_times.len());
    let mut scan_text = String::new();
    for &s in &scan_times {
        let flags: Vec<bool> = {
            use rayon::prelude::*;
            xs.par_iter()
                .map(|x| ray.singular_indicator(s, x, None).map(|r| r.0))
                .collect::<Result<_, _>>()?
        };
        let hits: Vec<&Vec<f64>> = xs.iter().zip(&flags).filter(|(_, f)| **f).map(|(x, _)| x).collect();
        write!(
            scan_text,
            "  s = {s:.6}: {} of {} points singular",
            hits.len(),
            xs.len()
        )
        .unwrap();
        if let (Some(first), Some(last)) = (hits.first(), hits.last()) {
            write!(scan_text, ", from x = {} to x = {}", fmt_point(first), fmt_point(last)).unwrap();
        }
        scan_text.push('\n');
        scan.push((s, hits.len(), xs.len()));
    }

    let mut text = String::new();
    writeln!(text, "T_cvx = {}", fmt_time(t)).unwrap();
    writeln!(
        text,
        "binding_point = {}",
        life.binding_point
            .as_deref()
            .map_or_else(|| "none".to_string(), fmt_point)
    )
    .unwrap();
    writeln!(text, "min_eigenvalue_profile:").unwrap();
    for (s, lam, y) in &profile {
        writeln!(text, "  s = {s:.6}: min λ = {lam:.6e} at y = {}", fmt_point(y)).unwrap();
    }
    writeln!(text, "singular_scan:").unwrap();
    text.push_str(&scan_text);
    write_text(&out.join("lifespan.txt"), &text)?;

    Ok(LifespanReport {
        time: t,
        binding_point: life.binding_point,
        profile,
        singular_scan: scan,
        text,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub t: f64,
    pub resolution: usize,
    pub total: f64,
    pub regular: f64,
    pub singular: f64,
    pub half_width: f64,
    /// Against the previous resolution at the same `T`.
    pub total_decreasing: Option<bool>,
    /// Singular mass at least 90% of the previous resolution's.
    pub singular_stable: Option<bool>,
}

impl AuditRow {
    pub fn share(&self) -> f64 {
        if self.total > 0.0 {
            self.singular / self.total
        } else {
            0.0
        }
    }
}

/// One exact (or Monte Carlo when `n ≥ 2`) Alexandrov decomposition of `ψ`
/// on `[0, T] × [−X, X]ⁿ` with `resolution` cells per axis.
pub fn audit_one(
    config: &StudyConfig,
    problem: &ProblemF64,
    t: f64,
    resolution: usize,
    csv: Option<&Path>,
) -> CliResult<AuditRow> {
    let ma = &config.ma;
    let n = problem.dim();
    let mut legendre = config.legendre.clone();
    if ma.legendre_grid > 0 {
        legendre.grid_per_dim = ma.legendre_grid;
    }
    let ray = GeodesicRay::with_options(problem, ray_options(&legendre));
    let s = linspace(0.0, t, resolution + 1);
    let axis = linspace(-ma.x_window, ma.x_window, resolution + 1);
    let x = window_points(&axis, n);
    let table = PsiTable::build(&ray, s.clone(), x)?;
    let mut axes = vec![s];
    axes.extend(std::iter::repeat_n(axis, n));
    let f = pl_convexify(axes, table.psi)?;
    let options = MeasureOptions {
        mc_samples: ma.mc_samples,
        seed: config.seed,
    };
    let mut d = alexandrov_measure_with(&f, &options)?;
    let h = (t / resolution as f64).max(2.0 * ma.x_window / resolution as f64);
    let radius = ma.radius_factor * h;
    let (regular, singular) = mass_split(&mut d, |p| ray.singular_within(p[0], &p[1..], radius, None))?;
    if let Some(path) = csv {
        d.write_csv(path).map_err(|e| io_or(e, path))?;
    }
    Ok(AuditRow {
        t,
        resolution,
        total: d.total_mass,
        regular,
        singular,
        half_width: d.half_width,
        total_decreasing: None,
        singular_stable: None,
    })
}

pub fn run_ma_audit(config: &StudyConfig) -> CliResult<Vec<AuditRow>> {
    let out = &config.output.dir;
    ensure_dir(out)?;
    let problem = config.problem.build()?;
    if problem.dim() >= 2 {
        let msg = format!(
            "warning: n = {} needs (s, x) in dimension {}; Alexandrov masses are Monte Carlo estimates",
            problem.dim(),
            problem.dim() + 1
        );
        println!("{msg}");
        log::warn!("{msg}");
    }
    let mut rows: Vec<AuditRow> = Vec::new();
    for &t in &config.ma.t_values {
        let mut prev: Option<AuditRow> = None;
        for &r in &config.ma.resolutions {
            let path = out.join(format!("ma_T{t}_R{r}.csv"));
            let mut row = audit_one(config, &problem, t, r, Some(&path))?;
            if let Some(p) = &prev {
                row.total_decreasing = Some(row.total < p.total);
                row.singular_stable = Some(row.singular >= 0.9 * p.singular);
            }
            log::info!(
                "T = {t}, R = {r}: total {:.6e}, singular {:.6e}",
                row.total,
                row.singular
            );
            prev = Some(row.clone());
            rows.push(row);
        }
    }
    let flag = |f: Option<bool>| f.map_or("na", |b| if b { "true" } else { "false" });
    let mut csv = String::from(
        "T,R,total_mass,regular_mass,singular_mass,singular_share,half_width,total_decreasing,singular_stable\n",
    );
    for r in &rows {
        writeln!(
            csv,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            r.t,
            r.resolution,
            r.total,
            r.regular,
            r.singular,
            r.share(),
            r.half_width,
            flag(r.total_decreasing),
            flag(r.singular_stable)
        )
        .unwrap();
    }
    let path = out.join("ma_summary.csv");
    let mut file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    file.write_all(csv.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_points_lexicographic() {
        let axis = [-1.0, 0.0, 1.0];
        let pts = window_points(&axis, 2);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1], vec![-1.0, 0.0]);
        assert_eq!(pts[3], vec![0.0, -1.0]);
        assert_eq!(window_points(&axis, 1), vec![vec![-1.0], vec![0.0], vec![1.0]]);
    }

    #[test]
    fn infinite_time_formats_as_inf() {
        assert_eq!(fmt_time(f64::INFINITY), "inf");
        assert_eq!(fmt_time(2.0), "2.0000000000");
    }
}
