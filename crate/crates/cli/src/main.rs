//! `mluq`: run multilevel UQ scenarios for the random-modulus beam.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;
use mluq::estimators::Budget;
use mluq::experiments::{rates_table, run_scenario, RunOptions, RunStatus, ScenarioConfig};
use mluq::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mluq", version, about = "Multilevel (quasi-)Monte Carlo for random-modulus beams")]
struct Cli {
    /// Print the six default scenarios and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report directory.
    Run {
        /// Scenario TOML; `case` and `uncertainty` select the defaults.
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for sample evaluation (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Wall-clock budget in seconds; partial results are written on expiry.
        #[arg(long)]
        budget: Option<f64>,
        /// Output directory (default: runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the six default scenarios, or write them as files.
    Defaults {
        /// Write one `<name>.toml` per scenario into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute level rates from a report directory's levels.csv.
    Rates {
        report_dir: PathBuf,
        /// δ used for MLQMC runs.
        #[arg(long, default_value_t = 0.5)]
        qmc_delta: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        _ if cli.print_defaults => print_defaults(None),
        None => print_defaults(None),
        Some(Command::Defaults { out }) => print_defaults(out.as_deref()),
        Some(Command::Rates { report_dir, qmc_delta }) => {
            rates_table(&report_dir, qmc_delta, std::io::stdout().lock())
                .map(|_| ExitCode::SUCCESS)
                .with_context(|| format!("reading {}", report_dir.display()))
        }
        Some(Command::Run {
            config,
            seed,
            workers,
            budget,
            out,
        }) => run(&config, seed, workers, budget, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let validation = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e, Error::Validation(_) | Error::Config(_)));
            eprintln!("error: {e:#}");
            if validation {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn print_defaults(out: Option<&Path>) -> anyhow::Result<ExitCode> {
    for s in ScenarioConfig::paper_scenarios() {
        match out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}.toml", s.name));
                std::fs::write(&path, s.to_toml())?;
                println!("{}", path.display());
            }
            None => println!("# --- {} ---\n{}", s.name, s.to_toml()),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(
    path: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    budget: Option<f64>,
    out: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let mut config = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let deadline = match budget {
        Some(b) if !(b > 0.0 && b.is_finite()) => {
            return Err(Error::Validation(vec![format!("--budget must be positive, got {b}")]).into())
        }
        Some(b) => Some(Instant::now() + Duration::from_secs_f64(b)),
        None => None,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Validation(vec!["--workers must be positive".into()]).into());
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building the worker pool")?;
    let opts = RunOptions {
        budget: Budget {
            deadline,
            max_evaluations: None,
        },
    };
    info!("running {} with {} workers", config.name, pool.current_num_threads());
    let report = pool.install(|| run_scenario(&config, &opts))?;
    let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
    report.write_dir(&dir)?;

    for p in &report.results {
        let f = p.frequency.map_or(String::new(), |f| format!("f = {f:7.2} Hz  "));
        match (&p.estimate, &p.error) {
            (Some(e), _) => println!(
                "{f}E[Q] = {:.6e}  sd = {:.2e}  levels 0..={}  {:?}",
                e.value,
                e.variance_of_estimator.sqrt(),
                e.levels_used,
                e.termination
            ),
            (None, Some(err)) => println!("{f}failed: {err}"),
            (None, None) => {}
        }
    }
    println!(
        "total cost {:.4e}, wall {:.1} s, report {} ({})",
        report.total_cost(),
        report.wall_seconds,
        dir.display(),
        &report.result_hash[..12]
    );
    Ok(match report.status() {
        RunStatus::Complete => ExitCode::SUCCESS,
        RunStatus::Partial => ExitCode::from(EXIT_PARTIAL),
    })
}
