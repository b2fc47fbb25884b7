//! Study configuration: a TOML file with `[problem]`, `[quantize]`, `[grid]`,
//! `[legendre]`, `[ma]` and `[output]` sections plus a top-level `seed`.
//!
//! ```toml
//! seed = 0
//!
//! [problem]
//! polytope = "segment"
//! velocity = "bump"
//!
//! [quantize]
//! ladder = [8, 16, 32, 64, 128]
//! ```
//!
//! Polynomials (`u0_smooth`, `velocity`, `kahler_velocity`) are either a
//! preset name or a table with `coefficients = [c0, c1, ...]` (one variable)
//! or `terms = [[c, e1, ..., en], ...]`.

use std::path::{Path, PathBuf};

use hrma_core::numerics::QuadratureOptions;
use hrma_core::{
    velocity_from_kahler_data, DelzantPolytope, LegendreOptions, PolynomialF64, PotentialField, ProblemF64,
};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum VelocitySpec {
    /// `u̇0` on `P`.
    Symplectic(PolynomialF64),
    /// `φ̇0` in moment coordinates; `u̇0 = −φ̇0`.
    Kahler(PolynomialF64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub polytope: DelzantPolytope,
    pub u0_smooth: PolynomialF64,
    pub velocity: VelocitySpec,
}

impl ProblemSpec {
    pub fn build(&self) -> CliResult<ProblemF64> {
        let p = &self.polytope;
        let bad = |e: hrma_core::Error| CliError::config(format!("problem: {e}"));
        let u0 = PotentialField::symplectic(p.clone(), self.u0_smooth.clone()).map_err(bad)?;
        let udot = match &self.velocity {
            VelocitySpec::Symplectic(v) => PotentialField::smooth(p.clone(), v.clone()),
            VelocitySpec::Kahler(v) => velocity_from_kahler_data(p, v),
        }
        .map_err(bad)?;
        ProblemF64::new(u0, udot).map_err(bad)
    }

    /// Effective velocity polynomial `u̇0`.
    pub fn udot0(&self) -> PolynomialF64 {
        match &self.velocity {
            VelocitySpec::Symplectic(v) => v.clone(),
            VelocitySpec::Kahler(v) => v.scaled(-1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub t: f64,
    pub s_step: f64,
    /// Half-width `X` of the window `[−X, X]ⁿ`.
    pub x_window: f64,
    pub x_step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaSpec {
    /// Cells per axis of the `[0, T] × [−X, X]ⁿ` box.
    pub resolutions: Vec<usize>,
    pub t_values: Vec<f64>,
    /// A vertex is singular when a kink of `ψ` lies within
    /// `radius_factor · h` of it, `h` the coarser grid spacing.
    pub radius_factor: f64,
    pub x_window: f64,
    pub legendre_grid: usize,
    pub mc_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub plot: bool,
    /// Spectral-level cache directory; `None` disables caching.
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub problem: ProblemSpec,
    pub ladder: Vec<u32>,
    pub quadrature: QuadratureOptions,
    pub grid: GridSpec,
    pub legendre: LegendreOptions,
    pub ma: MaSpec,
    pub output: OutputSpec,
    pub seed: u64,
}

impl StudyConfig {
    /// Hex SHA-256 of everything that determines the spectral levels.
    pub fn problem_hash(&self) -> String {
        let p = &self.problem;
        let q = &self.quadrature;
        let text = format!(
            "normals={:?}\noffsets={:?}\nu0={:?}\nudot0={:?}\nquadrature={},{:e},{},{}\n",
            p.polytope.normals(),
            p.polytope.offsets(),
            p.u0_smooth.terms(),
            p.udot0().terms(),
            q.order,
            q.rel_tol,
            q.max_panels,
            q.initial_splits
        );
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(path: &Path) -> CliResult<StudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses config text; relative output paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> CliResult<StudyConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config(format!("TOML syntax: {}", e.message())))?;
    let mut cx = Checker::default();
    cx.allow(
        &root,
        "",
        &["seed", "problem", "quantize", "grid", "legendre", "ma", "output"],
    );

    let seed = cx.uint(&root, "", "seed").unwrap_or(0) as u64;
    let problem = match cx.table(&root, "", "problem") {
        Some(t) => cx.problem(t),
        None => {
            cx.err("missing required key 'problem'");
            None
        }
    };

    let empty = Table::new();
    let q = cx.table(&root, "", "quantize").unwrap_or(&empty);
    cx.allow(q, "quantize", &["ladder", "order", "rel_tol", "max_panels"]);
    let ladder: Vec<u32> = cx
        .uint_list(q, "quantize", "ladder")
        .map(|v| v.into_iter().map(|n| n as u32).collect())
        .unwrap_or_else(|| vec![8, 16, 32, 64, 128]);
    if ladder.is_empty() {
        cx.err("quantize.ladder: must not be empty");
    } else if ladder.contains(&0) {
        cx.err("quantize.ladder: levels must be positive");
    } else if ladder.windows(2).any(|w| w[0] >= w[1]) {
        cx.err(format!(
            "quantize.ladder: levels must be strictly increasing, got {ladder:?}"
        ));
    }
    let mut quadrature = QuadratureOptions::default();
    if let Some(v) = cx.uint(q, "quantize", "order") {
        quadrature.order = v;
    }
    if let Some(v) = cx.positive(q, "quantize", "rel_tol") {
        quadrature.rel_tol = v;
    }
    if let Some(v) = cx.uint(q, "quantize", "max_panels") {
        quadrature.max_panels = v;
    }

    let g = cx.table(&root, "", "grid").unwrap_or(&empty);
    cx.allow(g, "grid", &["t", "s_step", "x_window", "x_step"]);
    let grid = GridSpec {
        t: cx.positive(g, "grid", "t").unwrap_or(3.0),
        s_step: cx.positive(g, "grid", "s_step").unwrap_or(0.05),
        x_window: cx.positive(g, "grid", "x_window").unwrap_or(6.0),
        x_step: cx.positive(g, "grid", "x_step").unwrap_or(0.05),
    };

    let l = cx.table(&root, "", "legendre").unwrap_or(&empty);
    cx.allow(
        l,
        "legendre",
        &[
            "grid_per_dim",
            "tie_abs",
            "tie_rel",
            "merge_radius",
            "newton_iterations",
        ],
    );
    let mut legendre = LegendreOptions::default();
    if let Some(v) = cx.uint(l, "legendre", "grid_per_dim") {
        legendre.grid_per_dim = v;
    }
    if let Some(v) = cx.positive(l, "legendre", "tie_abs") {
        legendre.tie_abs = v;
    }
    if let Some(v) = cx.positive(l, "legendre", "tie_rel") {
        legendre.tie_rel = v;
    }
    if let Some(v) = cx.positive(l, "legendre", "merge_radius") {
        legendre.merge_radius = v;
    }
    if let Some(v) = cx.uint(l, "legendre", "newton_iterations") {
        legendre.newton_iterations = v;
    }

    let m = cx.table(&root, "", "ma").unwrap_or(&empty);
    cx.allow(
        m,
        "ma",
        &[
            "resolutions",
            "t_values",
            "radius_factor",
            "x_window",
            "legendre_grid",
            "mc_samples",
        ],
    );
    let ma = MaSpec {
        resolutions: cx
            .uint_list(m, "ma", "resolutions")
            .unwrap_or_else(|| vec![128, 256, 512]),
        t_values: cx.float_list(m, "ma", "t_values").unwrap_or_else(|| vec![1.5, 3.0]),
        radius_factor: cx.positive(m, "ma", "radius_factor").unwrap_or(1.5),
        x_window: cx.positive(m, "ma", "x_window").unwrap_or(grid.x_window),
        legendre_grid: cx.uint(m, "ma", "legendre_grid").unwrap_or(512),
        mc_samples: cx.uint(m, "ma", "mc_samples").unwrap_or(200_000),
    };
    check_resolutions(&mut cx.errors, "ma.resolutions", &ma.resolutions);
    if ma.t_values.iter().any(|&t| t.is_nan() || t <= 0.0) {
        cx.err("ma.t_values: every time must be positive");
    }

    let o = cx.table(&root, "", "output").unwrap_or(&empty);
    cx.allow(o, "output", &["dir", "plot", "cache"]);
    let resolve = |p: String| {
        let p = PathBuf::from(p);
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    };
    let output = OutputSpec {
        dir: cx
            .string(o, "output", "dir")
            .map(resolve)
            .unwrap_or_else(|| PathBuf::from("hrma-out")),
        plot: cx.boolean(o, "output", "plot").unwrap_or(true),
        cache: cx.string(o, "output", "cache").map(resolve),
    };

    if !cx.errors.is_empty() {
        return Err(CliError::Config(cx.errors));
    }
    Ok(StudyConfig {
        problem: problem.expect("problem parsed when no errors were recorded"),
        ladder,
        quadrature,
        grid,
        legendre,
        ma,
        output,
        seed,
    })
}

pub fn check_resolutions(errors: &mut Vec<String>, key: &str, r: &[usize]) {
    if r.is_empty() {
        errors.push(format!("{key}: must not be empty"));
    } else if r.iter().any(|&v| v < 2) {
        errors.push(format!("{key}: each resolution needs at least 2 cells"));
    } else if r.windows(2).any(|w| w[0] >= w[1]) {
        errors.push(format!("{key}: resolutions must be strictly increasing, got {r:?}"));
    }
}

fn dotted(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

#[derive(Default)]
struct Checker {
    errors: Vec<String>,
}

impl Checker {
    fn err(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn allow(&mut self, t: &Table, section: &str, keys: &[&str]) {
        for k in t.keys() {
            if !keys.contains(&k.as_str()) {
                self.err(format!("unknown key '{}'", dotted(section, k)));
            }
        }
    }

    fn wrong(&mut self, section: &str, key: &str, want: &str, got: &Value) {
        self.err(format!(
            "{}: expected {want}, got {}",
            dotted(section, key),
            got.type_str()
        ));
    }

    fn table<'t>(&mut self, t: &'t Table, section: &str, key: &str) -> Option<&'t Table> {
        match t.get(key)? {
            Value::Table(v) => Some(v),
            other => {
                self.wrong(section, key, "a table", other);
                None
            }
        }
    }

    fn string(&mut self, t: &Table, section: &str, key: &str) -> Option<String> {
        match t.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.wrong(section, key, "a string", other);
                None
            }
        }
    }

    fn boolean(&mut self, t: &Table, section: &str, key: &str) -> Option<bool> {
        match t.get(key)? {
            Value::Boolean(b) => Some(*b),
            other => {
                self.wrong(section, key, "a boolean", other);
                None
            }
        }
    }

    fn float_value(v: &Value) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    fn positive(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        match Self::float_value(v) {
            Some(f) if f > 0.0 && f.is_finite() => Some(f),
            Some(f) => {
                self.err(format!(
                    "{}: must be positive and finite, got {f}",
                    dotted(section, key)
                ));
                None
            }
            None => {
                self.wrong(section, key, "a number", v);
                None
            }
        }
    }

    fn uint(&mut self, t: &Table, section: &str, key: &str) -> Option<usize> {
        match t.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            other => {
                self.wrong(section, key, "a nonnegative integer", other);
                None
            }
        }
    }

    fn array<'t>(&mut self, t: &'t Table, section: &str, key: &str) -> Option<&'t Vec<Value>> {
        match t.get(key)? {
            Value::Array(a) => Some(a),
            other => {
                self.wrong(section, key, "an array", other);
                None
            }
        }
    }

    fn uint_list(&mut self, t: &Table, section: &str, key: &str) -> Option<Vec<usize>> {
        let a = self.array(t, section, key)?;
        let out: Option<Vec<usize>> = a
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Some(*i as usize),
                _ => None,
            })
            .collect();
        if out.is_none() {
            self.err(format!("{}: expected nonnegative integers", dotted(section, key)));
        }
        out
    }

    fn float_list(&mut self, t: &Table, section: &str, key: &str) -> Option<Vec<f64>> {
        let a = self.array(t, section, key)?;
        let out: Option<Vec<f64>> = a.iter().map(Self::float_value).collect();
        if out.is_none() {
            self.err(format!("{}: expected numbers", dotted(section, key)));
        }
        out
    }

    fn problem(&mut self, t: &Table) -> Option<ProblemSpec> {
        self.allow(t, "problem", &["polytope", "u0_smooth", "velocity", "kahler_velocity"]);
        let polytope = match t.get("polytope") {
            None => {
                self.err("missing required key 'problem.polytope'");
                None
            }
            Some(Value::String(name)) => match DelzantPolytope::preset(name) {
                Ok(p) => Some(p),
                Err(e) => {
                    self.err(format!("problem.polytope: {e}"));
                    None
                }
            },
            Some(Value::Table(inline)) => self.inline_polytope(inline),
            Some(other) => {
                self.wrong("problem", "polytope", "a preset name or a table", other);
                None
            }
        };
        let n = polytope.as_ref().map(DelzantPolytope::dim);
        let u0_smooth = match (t.get("u0_smooth"), n) {
            (Some(v), Some(n)) => self.polynomial("problem.u0_smooth", v, n),
            (None, Some(n)) => Some(PolynomialF64::zero(n)),
            _ => None,
        };
        let velocity = match (t.get("velocity"), t.get("kahler_velocity")) {
            (Some(_), Some(_)) => {
                self.err("problem: give only one of 'velocity' and 'kahler_velocity'");
                None
            }
            (None, None) => {
                self.err("missing required key 'problem.velocity' (or 'problem.kahler_velocity')");
                None
            }
            (Some(v), None) => n.and_then(|n| self.polynomial("problem.velocity", v, n).map(VelocitySpec::Symplectic)),
            (None, Some(v)) => n.and_then(|n| {
                self.polynomial("problem.kahler_velocity", v, n)
                    .map(VelocitySpec::Kahler)
            }),
        };
        Some(ProblemSpec {
            polytope: polytope?,
            u0_smooth: u0_smooth?,
            velocity: velocity?,
        })
    }

    fn inline_polytope(&mut self, t: &Table) -> Option<DelzantPolytope> {
        self.allow(t, "problem.polytope", &["normals", "offsets"]);
        let ints = |v: &Value| -> Option<Vec<i64>> { v.as_array()?.iter().map(Value::as_integer).collect() };
        let normals: Option<Vec<Vec<i64>>> = match t.get("normals") {
            Some(Value::Array(rows)) => {
                let r: Option<Vec<Vec<i64>>> = rows.iter().map(ints).collect();
                if r.is_none() {
                    self.err("problem.polytope.normals: expected an array of integer arrays");
                }
                r
            }
            Some(other) => {
                self.wrong("problem.polytope", "normals", "an array", other);
                None
            }
            None => {
                self.err("missing required key 'problem.polytope.normals'");
                None
            }
        };
        let offsets = match t.get("offsets") {
            Some(v) => {
                let r = ints(v);
                if r.is_none() {
                    self.err("problem.polytope.offsets: expected an integer array");
                }
                r
            }
            None => {
                self.err("missing required key 'problem.polytope.offsets'");
                None
            }
        };
        match DelzantPolytope::new(normals?, offsets?) {
            Ok(p) => Some(p),
            Err(e) => {
                self.err(format!("problem.polytope: {e}"));
                None
            }
        }
    }

    fn polynomial(&mut self, key: &str, v: &Value, n: usize) -> Option<PolynomialF64> {
        let out = match v {
            Value::String(name) => velocity_preset(name, n),
            Value::Table(t) => {
                self.allow(t, key, &["coefficients", "terms"]);
                match (t.get("coefficients"), t.get("terms")) {
                    (Some(c), None) => {
                        let c: Option<Vec<f64>> = c.as_array().and_then(|a| a.iter().map(Self::float_value).collect());
                        match c {
                            Some(_) if n != 1 => {
                                Err(format!("'coefficients' needs a 1-dimensional polytope, got n = {n}"))
                            }
                            Some(c) => Ok(PolynomialF64::univariate(&c)),
                            None => Err("'coefficients' must be an array of numbers".to_string()),
                        }
                    }
                    (None, Some(terms)) => parse_terms(terms, n),
                    _ => Err("give exactly one of 'coefficients' and 'terms'".to_string()),
                }
            }
            other => Err(format!("expected a preset name or a table, got {}", other.type_str())),
        };
        match out {
            Ok(p) => Some(p),
            Err(e) => {
                self.err(format!("{key}: {e}"));
                None
            }
        }
    }
}

fn parse_terms(v: &Value, n: usize) -> Result<PolynomialF64, String> {
    let rows = v.as_array().ok_or("'terms' must be an array")?;
    let mut terms = Vec::with_capacity(rows.len());
    for row in rows {
        let row = row
            .as_array()
            .filter(|r| r.len() == n + 1)
            .ok_or_else(|| format!("each term must be [coefficient, e1, ..., e{n}]"))?;
        let c = Checker::float_value(&row[0]).ok_or("term coefficient must be a number")?;
        let e: Option<Vec<u32>> = row[1..]
            .iter()
            .map(|x| x.as_integer().and_then(|i| u32::try_from(i).ok()))
            .collect();
        terms.push((e.ok_or("exponents must be nonnegative integers")?, c));
    }
    PolynomialF64::new(n, terms).map_err(|e| e.to_string())
}

/// `zero`, `bump` (`Σ y_i(1 − y_i)`), `convex-bump` (its negative),
/// `constant:c` and `linear:a1,...,an,b` (`⟨a, y⟩ + b`).
pub fn velocity_preset(name: &str, n: usize) -> Result<PolynomialF64, String> {
    let bump = || {
        let mut terms = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 1;
            terms.push((e.clone(), 1.0));
            e[i] = 2;
            terms.push((e, -1.0));
        }
        PolynomialF64::new(n, terms).map_err(|e| e.to_string())
    };
    let numbers = |s: &str| -> Result<Vec<f64>, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
            .collect()
    };
    match name {
        "zero" => Ok(PolynomialF64::zero(n)),
        "bump" => bump(),
        "convex-bump" => Ok(bump()?.scaled(-1.0)),
        _ => {
            if let Some(rest) = name.strip_prefix("constant:") {
                let c = numbers(rest)?;
                if c.len() != 1 {
                    return Err("constant:c takes one number".to_string());
                }
                Ok(PolynomialF64::constant(n, c[0]))
            } else if let Some(rest) = name.strip_prefix("linear:") {
                let v = numbers(rest)?;
                if v.len() != n + 1 {
                    return Err(format!("linear:a1,...,an,b takes {} numbers for n = {n}", n + 1));
                }
                Ok(PolynomialF64::affine(&v[..n], v[n]))
            } else {
                Err(format!("unknown polynomial preset '{name}'"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<StudyConfig> {
        parse_config_str(text, Path::new("/tmp"))
    }

    fn messages(text: &str) -> Vec<String> {
        match parse(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn flagship_preset_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/flagship.cfg");
        let c = parse_config(&path).unwrap();
        assert_eq!(c.ladder, vec![8, 16, 32, 64, 128]);
        assert_eq!(c.problem.polytope, DelzantPolytope::segment());
        assert_eq!(c.problem.udot0(), PolynomialF64::bump());
        assert_eq!(c.grid.t, 3.0);
        let p = c.problem.build().unwrap();
        assert!((p.lifespan().unwrap().time - 2.0).abs() < 1e-6);
    }

    #[test]
    fn missing_problem_is_named() {
        let m = messages("seed = 1\n");
        assert_eq!(m.len(), 1);
        assert!(m[0].contains("'problem'"), "{m:?}");
    }

    #[test]
    fn every_unknown_key_is_listed() {
        let m = messages("foo = 1\n[problem]\npolytope = \"segment\"\nvelocity = \"bump\"\nbar = 2\n[grid]\nbaz = 3\n");
        for key in ["'foo'", "'problem.bar'", "'grid.baz'"] {
            assert!(m.iter().any(|s| s.contains(key)), "{key} not in {m:?}");
        }
        assert_eq!(m.len(), 3);
    }

    #[test]
    fn decreasing_ladder_rejected() {
        let m = messages("[problem]\npolytope = \"segment\"\nvelocity = \"bump\"\n[quantize]\nladder = [16, 8]\n");
        assert!(m[0].contains("strictly increasing"), "{m:?}");
    }

    #[test]
    fn presets_and_terms_agree() {
        let a = velocity_preset("linear:2,-1", 1).unwrap();
        assert_eq!(a, PolynomialF64::affine(&[2.0], -1.0));
        let terms: Value = toml::from_str::<Table>("t = [[1.0, 1], [-1.0, 2]]").unwrap()["t"].clone();
        assert_eq!(parse_terms(&terms, 1).unwrap(), PolynomialF64::bump());
        assert!(velocity_preset("linear:1", 1).is_err());
        assert!(velocity_preset("wiggle", 1).is_err());
    }

    #[test]
    fn inline_polytope_and_kahler_velocity() {
        let c = parse(
            "[problem]\npolytope = { normals = [[1], [-1]], offsets = [0, -1] }\n\
             kahler_velocity = { coefficients = [0.0, -1.0, 1.0] }\n",
        )
        .unwrap();
        assert_eq!(c.problem.polytope, DelzantPolytope::segment());
        assert_eq!(c.problem.udot0(), PolynomialF64::bump());
    }

    #[test]
    fn type_errors_name_the_key() {
        let m = messages("[problem]\npolytope = 3\nvelocity = \"bump\"\n[grid]\nt = -1\n");
        assert!(m.iter().any(|s| s.starts_with("problem.polytope")), "{m:?}");
        assert!(m.iter().any(|s| s.starts_with("grid.t")), "{m:?}");
    }

    #[test]
    fn hash_tracks_problem_not_grid() {
        let base = "[problem]\npolytope = \"segment\"\nvelocity = \"bump\"\n";
        let a = parse(base).unwrap();
        let b = parse(&format!("{base}[grid]\nt = 1.0\n")).unwrap();
        let c = parse("[problem]\npolytope = \"segment\"\nvelocity = \"zero\"\n").unwrap();
        assert_eq!(a.problem_hash(), b.problem_hash());
        assert_ne!(a.problem_hash(), c.problem_hash());
        assert_eq!(a.problem_hash().len(), 64);
    }
}
