use std::path::PathBuf;

use tending_core::bridge::BridgeError;
use tending_core::env::ConfigError;
use tending_core::marl::TrainError;
use tending_core::nn::NnError;

use crate::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{flag}: file not found: {}", path.display())]
    MissingFile { flag: &'static str, path: PathBuf },
    #[error("{}: {source}", path.display())]
    ConfigParse { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Scenario { path: PathBuf, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for problems with what the user passed in, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile { .. }
            | CliError::ConfigParse { .. }
            | CliError::Scenario { .. }
            | CliError::Usage(_) => 1,
            CliError::Train(TrainError::InvalidConfig { .. }) | CliError::Bridge(BridgeError::Config { .. }) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
