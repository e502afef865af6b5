use thiserror::Error;

/// Errors raised across the library.
///
/// Domain errors describe invalid inputs; the remaining variants describe
/// numerical failures or empty aggregation regions so callers can tell the
/// two apart (the CLI maps them to different exit codes).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("aggregation region is empty: no draw or scenario fell outside the risk region")]
    EmptyAggregationRegion,

    #[error("NNLS projection did not converge after {iterations} iterations (residual {residual:e})")]
    ProjectionFailed { iterations: usize, residual: f64 },

    #[error("draw cap of {cap} exceeded after collecting {n_risk} risk scenarios")]
    DrawCapExceeded { cap: u64, n_risk: usize },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// `true` for errors caused by bad inputs or configuration rather than
    /// by a numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::DimensionMismatch { .. } | Error::Parse(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability_open(beta: f64, what: &str) -> Result<()> {
    if beta.is_finite() && beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must lie in (0, 1), got {beta}")))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
