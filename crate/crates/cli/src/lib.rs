//! Command-line driver: JSON configuration, subcommands over CSV/JSON files,
//! and the end-to-end experiment pipeline with its Markdown report.

pub mod commands;
pub mod config;
pub mod error;
pub mod fsutil;
pub mod pipeline;
pub mod report;

pub use error::{CliError, CliResult};
