use snsm::SnsmError;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_WARN: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input file; the message names the row and column.
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] SnsmError),
}

impl CliError {
    pub fn parse(path: &Path, detail: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Config(_) | CliError::Io { .. } => EXIT_INPUT,
            CliError::Model(SnsmError::InvalidInput(_) | SnsmError::LengthMismatch { .. } | SnsmError::InvalidParams(_)) => {
                EXIT_INPUT
            }
            CliError::Model(_) => EXIT_NUMERIC,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_INPUT);
        assert_eq!(CliError::from(SnsmError::Degenerate("x".into())).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::from(SnsmError::InvalidInput("x".into())).exit_code(), EXIT_INPUT);
    }
}
