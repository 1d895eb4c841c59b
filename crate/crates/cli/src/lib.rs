//! Command-line experiment runner for the adaflow library.
//!
//! Each subcommand reads an [`ExperimentConfig`], computes everything in
//! memory and only then writes its CSV files, so a failed run leaves the
//! output directory untouched.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;
pub use output::Outputs;

#[derive(Debug, Parser)]
#[command(
    name = "adaflow",
    version,
    about = "Adaptive-momentum optimizer dynamics experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte-Carlo runs.
    #[arg(long, global = true, env = "ADAFLOW_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate a continuous-time system.
    Ode,
    /// Monte-Carlo runs of a discrete algorithm.
    Optimize,
    /// Asymptotic covariance at a minimum.
    Clt,
    /// Unstable spectrum at a critical point and escape runs.
    Traps,
}

pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    match command {
        Command::Ode => commands::cmd_ode(cfg),
        Command::Optimize => commands::cmd_optimize(cfg),
        Command::Clt => commands::cmd_clt(cfg),
        Command::Traps => commands::cmd_traps(cfg),
    }
}

/// Loads the config, runs the subcommand on a pool of `threads` workers and writes the outputs.
pub fn run(cli: &Cli) -> Result<Outputs, CliError> {
    let config = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    let cfg = ExperimentConfig::load(config)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let outputs = pool.install(|| execute(cli.command, &cfg))?;
    outputs.write(out)?;
    Ok(outputs)
}
