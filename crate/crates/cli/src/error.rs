use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rpde_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A file exists but does not have the expected layout.
    #[error("schema error: {0}")]
    Schema(String),
    /// A comparison ran but missed a threshold.
    #[error("comparison failed: {0}")]
    Verdict(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use rpde_core::Error as E;
        match self {
            CliError::Core(E::NumericFault(_) | E::Degenerate(_)) => 3,
            CliError::Core(_) | CliError::Io { .. } | CliError::Schema(_) => 2,
            CliError::Verdict(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
