use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of a CLI run, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 0 success, 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn data(path: &Path, message: impl ToString) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

impl From<partivae::Error> for CliError {
    fn from(e: partivae::Error) -> Self {
        use partivae::Error as E;
        match e {
            E::Parse {
                source_name,
                line,
                message,
            } => CliError::Data {
                path: PathBuf::from(source_name),
                message: format!("line {line}: {message}"),
            },
            E::NonFiniteGradient { .. } | E::Training { .. } | E::Noise(_) | E::Evaluation { .. } => {
                CliError::Numeric(e.to_string())
            }
            E::Dimension { .. } | E::Parameter { .. } | E::Capacity(_) | E::Config(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}
