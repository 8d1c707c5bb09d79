use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpgf_core::driver::{
    check_suite, converge_space, converge_time, eigs_config, emit_outputs, preset, run_config, CheckOptions, Outputs,
    RunConfig,
};
use gpgf_core::Error;

#[derive(Parser)]
#[command(
    name = "gpgf",
    version,
    about = "Ground states of the Gross-Pitaevskii energy by normalized gradient flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow once and write trace.csv and summary.json.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory; defaults to the config's out_dir, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence study in time or space; writes table.csv.
    Converge {
        #[arg(long, value_enum)]
        mode: StudyMode,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Time steps of a temporal study, e.g. `1/90,1/180,1/360`.
        #[arg(long, value_delimiter = ',', value_parser = parse_number)]
        taus: Option<Vec<f64>>,
        /// Reference time step of a temporal study.
        #[arg(long, value_parser = parse_number, default_value = "1/2000")]
        tau_ref: f64,
        /// Number of meshes in a spatial study; the reference is one refinement finer.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Two smallest eigenvalues of the linearized operator, as JSON.
    Eigs {
        #[command(flatten)]
        source: Source,
    },
    /// Property checks; exits with 1 if any fails.
    Check {
        #[arg(long, default_value_t = CheckOptions::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = CheckOptions::default().interpolation_samples)]
        interpolation_samples: usize,
        #[arg(long, default_value_t = CheckOptions::default().geometry_samples)]
        geometry_samples: usize,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration: example1, example2, linear1d, linear3d.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyMode {
    Time,
    Space,
}

/// A float or a fraction `a/b`.
fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            a / b
        }
        None => s.parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{s} is not a finite number"))
    }
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn load(source: &Source) -> Result<RunConfig, Failure> {
    let cfg = match (&source.config, &source.preset) {
        (Some(path), _) => {
            RunConfig::from_path(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn report_written(paths: &[impl AsRef<Path>]) {
    for p in paths {
        log::info!("wrote {}", p.as_ref().display());
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { source, out } => {
            let cfg = load(&source)?;
            let run = run_config(&cfg)?;
            let dir = out_dir(out, &cfg);
            let written = emit_outputs(
                &Outputs {
                    trace: Some(&run.trace),
                    summary: Some(&run.summary),
                    ..Outputs::default()
                },
                &dir,
            )?;
            report_written(&written);
            let s = &run.summary;
            println!(
                "steps {}  mu {:.12}  energy {:.12}  mass {:.3e}  converged {}",
                s.steps, s.final_mu, s.final_energy, s.final_mass, s.converged
            );
            if !s.converged {
                return Err(Failure::Numerical("stopping rule not met within max_steps".into()));
            }
        }
        Command::Converge {
            mode,
            source,
            out,
            taus,
            tau_ref,
            levels,
        } => {
            let cfg = load(&source)?;
            let record = match mode {
                StudyMode::Time => {
                    let taus = taus.unwrap_or_else(|| vec![cfg.tau, cfg.tau / 2.0, cfg.tau / 4.0]);
                    converge_time(&cfg, &taus, tau_ref)?
                }
                StudyMode::Space => converge_space(&cfg, levels, cfg.tau)?,
            };
            let dir = out_dir(out, &cfg);
            let written = emit_outputs(
                &Outputs {
                    table: Some(&record),
                    ..Outputs::default()
                },
                &dir,
            )?;
            report_written(&written);
            print!("{}", gpgf_core::driver::table_csv(&record));
            if let Some(row) = record.rows.iter().find(|r| r.failure.is_some()) {
                return Err(Failure::Numerical(format!(
                    "run at tau = {:e}, h = {:e} failed: {}",
                    row.tau,
                    row.h,
                    row.failure.as_deref().unwrap_or_default()
                )));
            }
        }
        Command::Eigs { source } => {
            let cfg = load(&source)?;
            let (report, _) = eigs_config(&cfg)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Numerical(e.to_string()))?;
            println!("{text}");
        }
        Command::Check {
            seed,
            interpolation_samples,
            geometry_samples,
        } => {
            let report = check_suite(&CheckOptions {
                interpolation_samples,
                geometry_samples,
                seed,
            });
            for e in &report.entries {
                println!(
                    "{} {}: {}",
                    if e.passed { "ok    " } else { "FAILED" },
                    e.name,
                    e.detail
                );
            }
            if !report.all_passed() {
                return Err(Failure::Numerical("property check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numerical(msg)) => {
            eprintln!("gpgf: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("gpgf: configuration error: {msg}");
            ExitCode::from(2)
        }
    }
}
