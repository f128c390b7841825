//! Batch driver for the momsync simulator.
//!
//! Subcommands: `validate` checks an experiment file against the step-size
//! gates and horizon thresholds, `run` executes one experiment, `sweep` runs a
//! worker-count sweep and fits the speedup exponent, `report` turns a
//! directory of run ledgers into plot-ready CSV series.
//!
//! Exit codes: 0 success, 2 validation failure, 3 divergence, 4 I/O.

pub mod commands;
pub mod config;
pub mod error;
pub mod ledger;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "momsync",
    version,
    about = "Distributed momentum SGD simulator"
)]
pub struct Cli {
    /// Run even when a step-size gate is violated.
    #[arg(long, global = true)]
    pub force: bool,
    /// Override the experiment seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (takes precedence over MOMENTUM_SYNC_OUT and the file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check gates and thresholds without running.
    Validate { config: PathBuf },
    /// Run one experiment and write trace.csv, result.json and bound.json.
    Run { config: PathBuf },
    /// Run the worker-count sweep and write speedup.csv and speedup_fit.json.
    Sweep { config: PathBuf },
    /// Build plot-data CSV series from a directory of run outputs.
    Report { dir: PathBuf },
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let opts = commands::Options {
        force: cli.force,
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads,
    };
    match cli.command {
        Command::Validate { config } => {
            commands::cmd_validate(&config, &opts, &mut std::io::stdout().lock())
        }
        Command::Run { config } => commands::cmd_run(&config, &opts).map(|_| ()),
        Command::Sweep { config } => commands::cmd_sweep(&config, &opts).map(|_| ()),
        Command::Report { dir } => report::cmd_report(&dir, opts.out.as_deref()).map(|_| ()),
    }
}
