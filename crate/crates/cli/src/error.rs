use std::path::PathBuf;

use tableseq::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("path does not exist: {}", .0.display())]
    PathMissing(PathBuf),
    #[error("cannot parse config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] tableseq::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for bad data, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::PathMissing(_) | CliError::Toml(_) => 2,
            CliError::Csv(_) | CliError::Io(_) | CliError::Json(_) => 3,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
