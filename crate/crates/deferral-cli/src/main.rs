//! `defer`: run learning-to-defer experiments, verify the library's analytic
//! guarantees, or generate synthetic datasets.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use deferral_cli::config::{DataConfig, ExperimentConfig};
use deferral_cli::experiments::{generate_data, run_experiment};
use deferral_cli::verify::{render_table, run_verification_suite};

/// Worker-count override for the trial pool; unset means one per core.
const WORKERS_ENV: &str = "DEFER_WORKERS";

#[derive(Parser)]
#[command(name = "defer", version, about = "Learning-to-defer experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        /// Path to the experiment config (JSON, flat keys).
        config: PathBuf,
    },
    /// Run the built-in verification suite; needs no config or data.
    Verify {
        /// Master seed for the randomized checks.
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Generate a synthetic dataset (train.csv, test.csv, manifest.json).
    GenData {
        /// Path to the dataset config (JSON, flat keys).
        config: PathBuf,
    },
}

fn init_worker_pool() -> Result<()> {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let workers: usize = raw
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))?;
        if workers == 0 {
            bail!("{WORKERS_ENV} must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("worker pool already initialized")?;
    }
    Ok(())
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    init_worker_pool()?;
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let output = run_experiment(&cfg)?;
            println!(
                "{} trials complete; results in {}",
                cfg.trials,
                cfg.out_dir.display()
            );
            let _ = output;
            Ok(())
        }
        Command::Verify { seed } => {
            let outcomes = run_verification_suite(seed)?;
            println!("{}", render_table(&outcomes));
            let failed = outcomes.iter().filter(|o| !o.pass).count();
            if failed > 0 {
                bail!("{failed} of {} checks failed", outcomes.len());
            }
            Ok(())
        }
        Command::GenData { config } => {
            let cfg = DataConfig::load(&config)?;
            let dir = generate_data(&cfg)?;
            println!("dataset written to {}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
