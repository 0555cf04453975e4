//! File formats and the command line for `sanex-core`.

pub mod checkpoint;
pub mod cli;
pub mod config_file;
mod error;
pub mod metrics;
pub mod scores;

pub use error::CliError;
