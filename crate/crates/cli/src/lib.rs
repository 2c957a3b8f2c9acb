//! Command-line harness: run configs, training and evaluation runs, bridge runs, checkpoints,
//! metrics CSVs and plots.

pub mod checkpoint;
pub mod commands;
pub mod config;
mod error;
pub mod metrics;
pub mod plot;
pub mod udp;

pub use config::RunConfig;
pub use error::CliError;
