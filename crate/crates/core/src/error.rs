use thiserror::Error;

use crate::linalg::Vector;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the numerical routines and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{0} must be square")]
    NotSquare(&'static str),

    #[error("{what} is not symmetric (relative asymmetry {residual:.3e})")]
    NotSymmetric { what: &'static str, residual: f64 },

    #[error("{what} is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemidefinite { what: &'static str, eigenvalue: f64 },

    #[error("{what} is not positive definite (smallest eigenvalue {eigenvalue:.3e})")]
    NotPositiveDefinite { what: &'static str, eigenvalue: f64 },

    #[error("{0} did not converge")]
    Decomposition(&'static str),

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    /// The mean is not in the image of the covariance; `component` is the
    /// part of the mean lying in the kernel, a risk-free positive payoff.
    #[error("weak no-arbitrage violated: kernel component of the mean has norm {norm:.3e}")]
    Arbitrage { component: Vector, norm: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("unknown distribution `{0}`")]
    InvalidDistribution(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record `{record}`: {message}")]
    Record { record: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
