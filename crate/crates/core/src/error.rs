use thiserror::Error;

/// Errors produced by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computed quantity failed a numerical sanity check.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Step doubling did not reach the requested tolerance.
    #[error("propagator did not converge to tol {tol:e} after {steps} steps (last change {change:e})")]
    Convergence { tol: f64, steps: usize, change: f64 },

    /// A sweep cell failed; `key` names the offending grid point.
    #[error("cell {key}: {source}")]
    Cell {
        key: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
