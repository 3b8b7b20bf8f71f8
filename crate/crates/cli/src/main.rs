//! `edfq`: simulate EDF queues with reneging, audit pathwise invariants,
//! sweep deadline bounds, and compare against heavy-traffic predictions.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::{ExperimentConfig, Overrides};

#[derive(Parser, Debug)]
#[command(name = "edfq", version, about = "Earliest-deadline-first queues with reneging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one trajectory CSV per (seed, policy) and long-run estimates.
    Simulate(Common),
    /// Check the pathwise invariants on shared streams.
    Audit(Common),
    /// Late and lost fractions across the deadline upper bound.
    Sweep(Common),
    /// Local-time rate of the reflected diffusion.
    Diffusion(Common),
    /// Table of heavy-traffic predictions.
    Predict(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Replace the configured seed list with this single seed.
    #[arg(long, value_name = "N")]
    seed_override: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Exact rational arithmetic.
    #[arg(long)]
    rational: bool,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, value_name = "K")]
    workers: Option<usize>,
    /// Fraction of each run discarded as warm-up.
    #[arg(long, value_name = "FRACTION")]
    warmup: Option<f64>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_FAIL: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let (Command::Simulate(c)
    | Command::Audit(c)
    | Command::Sweep(c)
    | Command::Diffusion(c)
    | Command::Predict(c)) = &cli.command;
    if let Some(k) = c.workers {
        if k == 0 {
            anyhow::bail!("--workers must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let cfg = ExperimentConfig::load(
        &c.config,
        &Overrides {
            seed: c.seed_override,
            out: c.out.clone(),
            warmup: c.warmup,
        },
    )?;
    match &cli.command {
        Command::Simulate(_) => commands::simulate::run(&cfg, c.rational),
        Command::Audit(_) => commands::audit::run(&cfg, c.rational),
        Command::Sweep(_) => commands::sweep::run(&cfg, c.rational),
        Command::Diffusion(_) => commands::diffusion::run(&cfg),
        Command::Predict(_) => commands::predict::run(&cfg),
    }
}
