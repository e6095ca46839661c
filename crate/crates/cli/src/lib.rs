//! Command-line runner: configs in, CSV files and a run manifest out.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigSource, RunConfig, Subcommand};
pub use error::CliError;
pub use run::execute;
