//! Command-line orchestration over the `tableseq` library.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod sweep;

pub use args::Cli;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
