//! Library surface of the `flatten` experiment runner: config parsing and
//! the experiment dispatcher, kept separate from the binary so tests can
//! drive full runs in-process.

pub mod config;
pub mod runner;

pub use config::{Config, ConfigError};
pub use runner::{run, run_with_config, CliError, ExperimentKind, RunOptions, RunSummary};
