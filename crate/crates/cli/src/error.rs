use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("world error: {0}")]
    World(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// Process exit status; these values are part of the command-line contract.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::World(_) => 3,
            CliError::Artifact(_) => 4,
        }
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Failed(format!("cannot write {}: {e}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
