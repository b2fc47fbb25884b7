use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hrma(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrma"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "[problem]\npolytope = \"segment\"\nvelocity = \"bump\"\n\
    [quantize]\nladder = [4, 8, 16]\n\
    [grid]\nt = 3.0\ns_step = 0.5\nx_window = 4.0\nx_step = 0.5\n\
    [output]\nplot = false\n";

fn read_table(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn decreasing_ladder_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.cfg",
        "[problem]\npolytope = \"segment\"\nvelocity = \"bump\"\n[quantize]\nladder = [16, 8]\n",
    );
    let out = hrma(&["converge"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("quantize.ladder"));
}

#[test]
fn config_errors_name_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "foo = 1\n[grid]\nbar = 2\n");
    let out = hrma(&["lifespan"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["'foo'", "'grid.bar'", "'problem'"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
}

#[test]
fn unwritable_output_exits_with_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = hrma(&["converge"], &cfg, &blocker.join("sub"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        "ladder = [4, 8, 16]",
        "ladder = [4, 8, 16]\nrel_tol = 1e-300\nmax_panels = 1",
    );
    let cfg = write_config(dir.path(), "tight.cfg", &text);
    let out_dir = dir.path().join("out");
    let out = hrma(&["converge"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(3));
    let diag = std::fs::read_to_string(out_dir.join("diagnostics.txt")).unwrap();
    assert!(diag.contains("quadrature"), "{diag}");
}

#[test]
fn summary_matches_emitted_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out_dir = dir.path().join("out");
    assert!(hrma(&["converge"], &cfg, &out_dir).status.success());
    let summary = read_table(&out_dir.join("summary.csv"));
    assert_eq!(summary.len(), 3);
    for row in &summary {
        let grid = read_table(&out_dir.join(format!("converge_N{}.csv", row[0] as u32)));
        let sup = grid.iter().fold(0.0f64, |m, r| m.max(r[4].abs()));
        assert_eq!(sup, row[1]);
        // E_N = tilde_phi_N − phi
        for r in &grid {
            assert!((r[4] - (r[3] - r[5])).abs() < 1e-12);
        }
    }
    assert!(summary.windows(2).all(|w| w[1][1] < w[0][1]));
}

#[test]
fn zero_velocity_error_is_constant_in_s() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.cfg", &SMALL.replace("\"bump\"", "\"zero\""));
    let out_dir = dir.path().join("out");
    assert!(hrma(&["converge"], &cfg, &out_dir).status.success());
    let grid = read_table(&out_dir.join("converge_N8.csv"));
    let nx = grid.iter().filter(|r| r[0] == 0.0).count();
    for (k, r) in grid.iter().enumerate() {
        assert!((r[4] - grid[k % nx][4]).abs() < 1e-12);
    }
}

#[test]
fn cached_levels_reproduce_fresh_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}cache = \"cache\"\n");
    let cfg = write_config(dir.path(), "cached.cfg", &text);
    assert!(hrma(&["spectral-cache"], &cfg, &dir.path().join("warm"))
        .status
        .success());
    let fresh = write_config(dir.path(), "fresh.cfg", SMALL);
    assert!(hrma(&["converge"], &fresh, &dir.path().join("a")).status.success());
    let second = hrma(&["spectral-cache"], &cfg, &dir.path().join("warm"));
    assert!(String::from_utf8_lossy(&second.stdout).contains("N = 16: loaded"));
    assert!(hrma(&["converge"], &cfg, &dir.path().join("b")).status.success());
    for n in [4, 8, 16] {
        let name = format!("converge_N{n}.csv");
        assert_eq!(
            std::fs::read(dir.path().join("a").join(&name)).unwrap(),
            std::fs::read(dir.path().join("b").join(&name)).unwrap()
        );
    }
}

#[test]
fn flagship_lifespan_report() {
    let dir = tempfile::tempdir().unwrap();
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/flagship.cfg");
    let out_dir = dir.path().join("out");
    let out = hrma(&["lifespan"], &preset, &out_dir);
    assert!(out.status.success());
    let report = std::fs::read_to_string(out_dir.join("lifespan.txt")).unwrap();
    assert!(report.starts_with("T_cvx = 2.0000"), "{report}");
    assert!(report.contains("binding_point = 0.5000"), "{report}");
    assert!(report.contains("s = 3.000000: min λ = -"), "{report}");
}

#[test]
fn linear_velocity_audit_has_little_mass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "linear.cfg",
        "[problem]\npolytope = \"segment\"\nvelocity = \"linear:1,0\"\n\
         [ma]\nresolutions = [16, 32, 64]\nt_values = [5.0]\nlegendre_grid = 256\n",
    );
    let out_dir = dir.path().join("out");
    assert!(hrma(&["ma-audit"], &cfg, &out_dir).status.success());
    let text = std::fs::read_to_string(out_dir.join("ma_summary.csv")).unwrap();
    let totals: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 3);
    assert!(totals[2] < 0.01, "{totals:?}");
    assert!(out_dir.join("ma_T5_R64.csv").exists());
}

#[test]
fn two_dimensional_audit_falls_back_to_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "square.cfg",
        "seed = 3\n[problem]\npolytope = \"square\"\nvelocity = \"bump\"\n\
         [ma]\nresolutions = [4]\nt_values = [1.0]\nx_window = 3.0\nlegendre_grid = 48\nmc_samples = 2000\n",
    );
    let out_dir = dir.path().join("out");
    let out = hrma(&["ma-audit", "--threads", "2"], &cfg, &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Monte Carlo"));
    let rows = std::fs::read_to_string(out_dir.join("ma_summary.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
}

#[test]
fn resolution_flag_overrides_audit_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let bad = hrma(&["ma-audit", "--resolution", "32,16"], &cfg, &dir.path().join("x"));
    assert_eq!(bad.status.code(), Some(1));
    let out_dir = dir.path().join("out");
    let ok = hrma(&["ma-audit", "--resolution", "8,16"], &cfg, &out_dir);
    assert!(ok.status.success());
    assert!(out_dir.join("ma_T3_R16.csv").exists());
    assert!(!out_dir.join("ma_T3_R128.csv").exists());
}
