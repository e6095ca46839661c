use thiserror::Error;

/// Failure modes shared by every solver and study in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed call: shape mismatches, missing data, bad arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// Explicit advection step would exceed the Courant limit.
    #[error(
        "CFL violation: max velocity {max_velocity:.6e} needs dt <= {dt_limit:.6e}, got dt = {dt:.6e}"
    )]
    Cfl {
        max_velocity: f64,
        dt_limit: f64,
        dt: f64,
    },

    /// A density value fell below the positivity tolerance.
    #[error("positivity violated: min value {min:.3e} is below -{tolerance:.1e}")]
    Positivity { min: f64, tolerance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Mass reached the edge of a truncated real-line domain.
    #[error("boundary mass leakage {leaked:.3e} exceeds {limit:.1e}; widen the domain")]
    Leakage { leaked: f64, limit: f64 },

    /// A parameter violates its precondition.
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable category used in error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Usage(_) => "usage",
            Error::Cfl { .. } => "cfl",
            Error::Positivity { .. } => "positivity",
            Error::Unsupported(_) => "unsupported",
            Error::Leakage { .. } => "leakage",
            Error::Config(_) => "config",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Cfl { .. } | Error::Positivity { .. } | Error::Leakage { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
