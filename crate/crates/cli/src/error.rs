use std::path::Path;

use thiserror::Error;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or inconsistent configuration (exit 2).
    #[error("configuration error: {0}")]
    Config(String),

    /// Unreadable, missing or invalid input data or artifacts (exit 3).
    #[error("data error: {0}")]
    Data(String),

    /// The sampler could not produce draws (exit 4).
    #[error("sampler failure: {0}")]
    Sampler(String),

    /// Anything else, including failed writes (exit 1).
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Sampler(_) => 4,
            CliError::Internal(_) => 1,
        }
    }

    /// Failure to read an input file or artifact.
    pub fn read(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("cannot read {}: {e}", path.display()))
    }

    /// Failure to write an output file.
    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Internal(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<cratio::Error> for CliError {
    fn from(e: cratio::Error) -> Self {
        use cratio::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::Unknown { .. } => CliError::Config(msg),
            E::Initialization(_) | E::Sampler(_) => CliError::Sampler(msg),
            E::Domain(_) | E::Schema(_) | E::Dimension(_) | E::Data(_) | E::Comparison(_) | E::Format(_) => {
                CliError::Data(msg)
            }
            E::Io(_) => CliError::Internal(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

