use thiserror::Error;

/// Errors produced by the numerical routines and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |A - A^H| = {max_asymmetry:e} (tolerance {tolerance:e})")]
    NotHermitian { max_asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("matrix is singular or indefinite: smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e}")]
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("{what} is numerically singular (smallest pivot ratio {pivot_ratio:e})")]
    Singular { what: String, pivot_ratio: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("complex log-determinant of {what} has imaginary part {imag:e}")]
    ComplexLogDet { what: String, imag: f64 },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
