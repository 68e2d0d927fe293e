//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by mesh construction, assembly, solvers and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid geometric or discretization input (mesh sizes, orientations, ...).
    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),

    /// Material data failed validation.
    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    /// Time-stepping or stage-problem parameters out of range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Vector/matrix dimensions passed to an operation do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A linear sub-solver failed (non-SPD block, breakdown, no convergence).
    #[error("linear solver failure: {0}")]
    Solver(String),

    /// The outer coupling iteration did not converge within the budget.
    #[error("coupling iteration did not converge at step {step} after {iterations} iterations")]
    NonConvergence { step: usize, iterations: usize },

    /// Scenario configuration is inconsistent or incomplete.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// File system problem while writing run artifacts.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization problem.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
