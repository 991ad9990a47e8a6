//! The `stagdid` command-line front end. Each subcommand loads a
//! [`RunConfig`], applies flag overrides, runs the pipeline on a rayon pool
//! of the requested size and writes its output tree plus `manifest.json`.

mod args;
mod commands;
mod config;
mod error;
mod output;

pub use args::{Cli, Command, Kind};
pub use config::{Cluster, CostBenefitConfig, RunConfig};
pub use error::{CliError, ExitKind};

/// The bundled constants profile used when no profile path is given.
pub const DEFAULT_PROFILE: &str = include_str!("../profiles/default.toml");

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads.filter(|n| *n > 0) {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config("thread_pool", e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command))
}
