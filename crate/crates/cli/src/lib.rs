//! Command-line front end: experiment configuration, data loading against
//! trained models, the subcommands and their report schemas.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod report;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult, Kind};
