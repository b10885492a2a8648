use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: non-finite value at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver became unstable at step {step} (t = {time:.6})")]
    Instability { step: usize, time: f64 },

    #[error("singular value {index} ({value:e}) is below the rank tolerance {tol:e}")]
    SmallSingularValue { index: usize, value: f64, tol: f64 },

    #[error("backward called with a cache produced by different parameters")]
    StaleCache,

    #[error("zero-distance neighbour pair ({0}, {1})")]
    ZeroDistance(usize, usize),

    #[error("no candidate accepted for frequency index {index} after {trials} trials")]
    SynthesisFailed { index: usize, trials: usize },

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn mismatch(
        op: &'static str,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that stem from the numerics rather than from input
    /// validation (used by the CLI to pick an exit code).
    /// CLI exit code: 2 for configuration and usage errors, 3 for numerical
    /// failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::Json(_)
            | Error::DimensionMismatch { .. } => 2,
            e if e.is_numerical() => 3,
            _ => 1,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Instability { .. }
                | Error::SmallSingularValue { .. }
                | Error::SynthesisFailed { .. }
        )
    }
}
