//! Command-line front end: kernel inspection, ensemble simulation,
//! condition diagnostics and the truncated counterexample.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{exit, CliError};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "qclt", version, about = "Quenched CLT experiments for finite Markov chains")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for Monte Carlo; defaults to all cores.
    #[arg(long, global = true, env = "QCLT_THREADS")]
    pub threads: Option<usize>,

    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary law, ergodicity and reversibility of a kernel.
    Kernel(KernelArgs),
    /// Quenched and annealed ensembles, written as CSV and JSON.
    Simulate,
    /// Evaluates the configured conditions.
    Diagnose(DiagnoseArgs),
    /// Divergent series and bounded supremum of the truncated example.
    Counterexample(CounterexampleArgs),
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Kernel JSON file (`{"states": [...], "rows": [[...]]}`).
    #[arg(long, conflicts_with = "config")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Exit 0 instead of 5 when some verdict is inconclusive.
    #[arg(long)]
    pub allow_inconclusive: bool,
}

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    /// Number of levels, 1 to 6.
    #[arg(long = "k", short = 'k')]
    pub levels: usize,

    /// Monte Carlo draws for the supremum.
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Kernel(args) => commands::kernel(cli, args),
        Command::Simulate => commands::simulate(cli),
        Command::Diagnose(args) => commands::diagnose(cli, args),
        Command::Counterexample(args) => commands::counterexample(cli, args),
    }
}
