//! Configuration, reports and commands behind the `lipobs` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::RunConfig;
pub use error::CliError;
