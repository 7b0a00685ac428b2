//! Command-line runner for the estimation and forecasting experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparam::experiment::{run_command, Command, ExperimentConfig, ReproduceTarget};

#[derive(Debug, Parser)]
#[command(name = "sparam", version, about = "Stochastic parametrization experiments for Langevin systems")]
struct Cli {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set obs.h=1/8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,

    /// Base seed; overrides `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Simulate one dataset and write `observations.csv`.
    Simulate,
    /// Fit the continuous-time contrast estimator.
    EstimateCt {
        /// Observations CSV (`n,t,x`); simulated from the config if absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit a NARMA model by conditional likelihood.
    FitNarma {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit on the first half, benchmark forecasts on the second half.
    Forecast {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Empirical PDF and ACF of a series.
    Stats {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit many independent datasets and report mean and spread.
    Replicate,
    /// Refit on growing prefixes of one dataset.
    Consistency {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Regenerate a reference table or figure dataset.
    Reproduce {
        /// table1 | table2 | table3 | table4 | table5 | fig-rmse | fig-acfpdf
        target: String,
    },
}

fn run(cli: Cli) -> sparam::Result<Vec<String>> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| sparam::Error::InvalidParameter(e.to_string()))?;
    }
    let (command, input) = match cli.command {
        Cmd::Simulate => (Command::Simulate, None),
        Cmd::EstimateCt { input } => (Command::EstimateCt, input),
        Cmd::FitNarma { input } => (Command::FitNarma, input),
        Cmd::Forecast { input } => (Command::Forecast, input),
        Cmd::Stats { input } => (Command::Stats, input),
        Cmd::Replicate => (Command::Replicate, None),
        Cmd::Consistency { input } => (Command::Consistency, input),
        Cmd::Reproduce { target } => (Command::Reproduce(target.parse::<ReproduceTarget>()?), None),
    };
    run_command(&cfg, &command, &cli.out, input.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
