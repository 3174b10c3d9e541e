use thiserror::Error;

/// Errors raised by the physics and numerics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A height offset violates the first-order expansion in `a`.
    #[error("linearization violated: |a·Δz| = {value:.3e} must be < {limit}")]
    Linearization { value: f64, limit: f64 },

    /// A flat polarization component is zero, so only the weighted product is defined.
    #[error("polarization component {component} vanishes; only the weighted product f0·M is defined")]
    VanishingPolarization { component: usize },

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: estimated error {error:.3e} > tolerance {tolerance:.3e} after {intervals} intervals")]
    Quadrature {
        error: f64,
        tolerance: f64,
        intervals: usize,
    },

    /// Inconsistent or malformed input data.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that reflect the physics domain rather than bad input.
    pub fn is_physics_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Linearization { .. } | Error::VanishingPolarization { .. }
        )
    }
}
