//! Configuration, orchestration and artifact emission for the `ultimax`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Command, Options, Report};
pub use error::CliError;
