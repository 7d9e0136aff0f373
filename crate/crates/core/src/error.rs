use thiserror::Error;

/// Errors raised anywhere in the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A NaN or infinity appeared where a finite number was required.
    #[error("numeric fault: {0}")]
    NumericFault(String),
    /// The caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// A problem, domain or run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Configuration(String),
    /// A statistic was requested from a sample with no spread.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFault(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
