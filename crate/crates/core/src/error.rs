use thiserror::Error;

use crate::netmodel::CaseError;

/// Top-level error for solver entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] CaseError),

    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        /// Identifiers of the constraints that could not be satisfied.
        violated: Vec<String>,
    },

    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
