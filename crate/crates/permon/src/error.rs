use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors of the command-line pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] permon_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Stable name of the error class, used in the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        use permon_core::Error as C;
        match self {
            Error::Config(_) | Error::Core(C::InvalidConfig(_)) => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Parse { .. } => "ParseError",
            Error::Core(C::FrameMismatch(_)) => "FrameMismatch",
            Error::Core(C::InvalidState(_)) => "InvalidState",
            Error::Core(C::ZeroInterval { .. }) => "ZeroInterval",
            Error::Core(C::MissingHistory { .. }) => "MissingHistory",
        }
    }
}
