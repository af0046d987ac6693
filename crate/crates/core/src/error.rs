use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("deformation index must be positive, got {0}")]
    InvalidDeformIndex(f64),

    #[error("deformed exponential undefined: 1 + (1 - t) x = {bracket} <= 0 with t = {t}")]
    ExpDomain { bracket: f64, t: f64 },

    #[error("deformed logarithm undefined for negative argument {0}")]
    LogDomain(f64),

    #[error("degrees of freedom must be positive and finite, got {0}")]
    InvalidDof(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("scale recovery is singular: (t - 1)/2 == 1/k for k = {k}")]
    ScaleRecoverySingular { k: usize },

    #[error("deformation index mismatch: {0} vs {1}")]
    DeformMismatch(f64, f64),

    #[error("cavity for site {index} is not positive definite")]
    InvalidCavity { index: usize },

    #[error("degenerate moment matching: {0}")]
    DegenerateMoments(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {err:e})")]
    Quadrature { tol: f64, err: f64 },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
