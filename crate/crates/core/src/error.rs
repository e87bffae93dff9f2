use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into two families: input validation (the caller passed
/// something outside an operation's domain) and numerical failure (the
/// computation itself could not meet its contract).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix dimension {0} is odd")]
    OddDimension(usize),

    #[error("matrix is not antisymmetric: deviation {deviation:e} exceeds {tolerance:e}")]
    NotSkew { deviation: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("quadrature did not converge: value {value:e}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("Pfaffian is not real: re {re:e}, im {im:e}")]
    NotReal { re: f64, im: f64 },

    #[error("correlation value {0:e} is negative beyond tolerance")]
    Negative(f64),

    #[error("QR iteration did not converge for a {0}x{0} matrix")]
    NoConvergence(usize),
}

impl Error {
    /// True for errors caused by invalid caller input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::OddDimension(_)
                | Error::NotSkew { .. }
                | Error::DimensionMismatch(_)
                | Error::Invalid(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
