//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by estimation, simulation, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A dimension was too small or two objects disagreed in dimension.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Kernel density at an evaluation point fell below the support floor.
    #[error("out-of-support point: estimated density {density:.3e} below floor {floor:.3e}")]
    OutOfSupport { density: f64, floor: f64 },

    /// Quadrature refinement stopped before reaching the requested tolerance.
    #[error("quadrature non-convergence: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    /// Too many Monte Carlo replications failed to produce an estimate.
    #[error("experiment error: {failed} of {total} replications failed (limit 5%): {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    /// Malformed dataset file.
    #[error("dataset parse error: {0}")]
    DatasetParse(String),

    /// Malformed configuration file.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
