//! Command-line orchestration for the market-state pipeline: config
//! resolution, the stage cache, output bookkeeping and the subcommands.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::{CliError, CliResult};
