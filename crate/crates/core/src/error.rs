use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    /// Array dimensions are inconsistent with each other or with an operator.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar or integer parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A container header or body could not be parsed.
    #[error("malformed container field `{field}`: {reason}")]
    Parse { field: String, reason: String },

    /// The payload ended before all declared samples were read.
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    /// The container declares a format version this build does not read.
    #[error("unsupported container version {found} (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The objective became non-finite during optimization.
    #[error("solver diverged at outer iteration {iteration}: objective = {objective}")]
    Divergence { iteration: usize, objective: f64 },

    /// The inner conjugate gradient solve broke down.
    #[error(
        "inner solver breakdown at outer iteration {outer}, cg step {inner}: \
         curvature = {curvature:e}, residual = {residual:e}"
    )]
    InnerSolver {
        outer: usize,
        inner: usize,
        curvature: f64,
        residual: f64,
    },

    /// A metric is undefined for the given inputs (e.g. zero-energy reference).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A dense decomposition failed to converge.
    #[error("decomposition failed: {0}")]
    Decomposition(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(field: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
