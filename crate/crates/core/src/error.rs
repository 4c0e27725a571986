use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by geometry construction, the solver, and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("bad class splitting: {0}")]
    BadSplitting(String),

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("gauge violation: {0}")]
    GaugeViolation(String),

    #[error(
        "Newton did not converge after {iterations} iterations (residual {residual:.3e}): {reason}"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("positivity lost: {0}")]
    PositivityLost(String),

    #[error("linear solve failed inside Newton: {0}")]
    LinearSolveFailure(String),

    #[error("state is not a solution: residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotASolution { residual: f64, tolerance: f64 },

    #[error("eigenvalue iteration did not converge in {0} iterations")]
    IterationFailure(usize),

    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),

    #[error("infeasible manufactured target: {0}")]
    InfeasibleTarget(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
