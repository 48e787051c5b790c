use alloc::string::String;

/// Errors raised by the thinning core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is singular or ill-conditioned (reciprocal condition {rcond:e})")]
    Singular { rcond: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("stream horizon {horizon} exhausted")]
    HorizonExceeded { horizon: u64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("root not bracketed on [{lo}, {hi}] ({what})")]
    NotBracketed { lo: f64, hi: f64, what: &'static str },

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {error:e}")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("criterion not supported here: {0}")]
    Unsupported(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
