use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: usize, what: &'static str },

    #[error("solver stalled after {iterations} iterations (residual {residual:e})")]
    SolverStalled { iterations: usize, residual: f64 },

    #[error("data not linearly separable (no certificate after {iterations} iterations)")]
    NotSeparable { iterations: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("refusing to overwrite existing output in {0} (use --force)")]
    OutputExists(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
