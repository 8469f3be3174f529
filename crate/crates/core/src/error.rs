use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid derivative request: {0}")]
    InvalidRequest(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid clamp range: lo = {lo} exceeds hi = {hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("non-finite {term} at iteration {iteration}")]
    NonFinite { iteration: usize, term: String },

    #[error("CSV schema mismatch in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint parse error at line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status used by the `rte` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Schema { .. } => 2,
            Error::NonFinite { .. } => 3,
            Error::Io { .. } => 4,
            _ => 1,
        }
    }
}
