//! Command-line front end for `twoscale-core`: JSON run configurations, run
//! directories with CSV tables and JSON reports, and one subcommand per study.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{execute, Outcome, Status};
pub use config::{parse_config, RunConfig, Study};
pub use error::CliError;
