use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hrma_cli::config::check_resolutions;
use hrma_cli::study::{run_convergence_study, run_lifespan_report, run_ma_audit, run_spectral_cache};
use hrma_cli::{parse_config, CliError, CliResult, StudyConfig};

#[derive(Parser, Debug)]
#[command(
    name = "hrma",
    version,
    about = "Quantized geodesic rays and their Monge-Ampère measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Study configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Grid resolutions for `ma-audit`, overriding `ma.resolutions`.
    #[arg(long, global = true, value_delimiter = ',')]
    resolution: Option<Vec<usize>>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Tables of φ_N, φ̃_N and E_N along the N ladder.
    Converge,
    /// Convex lifespan, eigenvalue profile and singular-locus scan.
    Lifespan,
    /// Alexandrov measure of ψ with its regular/singular split.
    MaAudit,
    /// Precompute or load spectral levels.
    SpectralCache,
}

fn load(cli: &Cli) -> CliResult<StudyConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::config("missing required flag --config"))?;
    let mut config = parse_config(path)?;
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(r) = &cli.resolution {
        match cli.command {
            Command::MaAudit => {
                let mut errors = Vec::new();
                check_resolutions(&mut errors, "--resolution", r);
                if !errors.is_empty() {
                    return Err(CliError::Config(errors));
                }
                config.ma.resolutions = r.clone();
            }
            _ => log::warn!("--resolution only affects ma-audit; ignored"),
        }
    }
    Ok(config)
}

fn run(command: Command, config: &StudyConfig) -> CliResult<()> {
    match command {
        Command::Converge => {
            let report = run_convergence_study(config)?;
            println!("N  sup_error  eigenvalue_gap");
            for r in &report.rows {
                println!("{}  {:.6e}  {:.6e}", r.level, r.sup_error, r.eigenvalue_gap);
            }
            if let Some((c, res)) = report.fit {
                println!("fitted C = {c:.6}, residual = {res:.4}");
            }
        }
        Command::Lifespan => {
            let report = run_lifespan_report(config)?;
            print!("{}", report.text);
        }
        Command::MaAudit => {
            let rows = run_ma_audit(config)?;
            println!("T  R  total  singular  share");
            for r in &rows {
                println!(
                    "{}  {}  {:.6e}  {:.6e}  {:.4}",
                    r.t,
                    r.resolution,
                    r.total,
                    r.singular,
                    r.share()
                );
            }
        }
        Command::SpectralCache => {
            for (n, cached) in run_spectral_cache(config)? {
                println!("N = {n}: {}", if cached { "loaded" } else { "computed" });
            }
        }
    }
    Ok(())
}

fn write_diagnostics(dir: &Path, command: Command, err: &CliError) {
    let text = format!("command: {command:?}\nerror: {err}\ndebug: {err:?}\n");
    let path = dir.join("diagnostics.txt");
    if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, text)) {
        eprintln!("could not write {}: {e}", path.display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(|| run(cli.command, &config)),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return ExitCode::from(3);
            }
        },
        None => run(cli.command, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 3 {
                write_diagnostics(&config.output.dir, cli.command, &e);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
