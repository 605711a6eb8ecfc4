//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("non-finite sample {value} at quadrature node ({x}, {y})")]
    NonFiniteSample { x: f64, y: f64, value: f64 },

    #[error("basis index {index} out of range (basis size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("unsupported operator order m = {0} (only m = 2 is implemented)")]
    UnsupportedOrder(usize),

    #[error("ill-conditioned basis: {0}")]
    IllConditionedBasis(String),

    #[error("Poisson solve did not converge: residual {residual:e} after {iterations} iterations (tolerance {tolerance:e})")]
    PoissonConvergence {
        residual: f64,
        iterations: usize,
        tolerance: f64,
    },

    #[error("initial data is zero; the Galerkin problem is trivial")]
    TrivialInitialData,

    #[error("time step underflow at t = {t}: dt = {dt:e} below dt_min")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonFailure { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plot rendering failed: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
