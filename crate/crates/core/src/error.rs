use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An integrand or objective produced a non-finite value.
    #[error("non-finite value {value} at theta = {node}")]
    Evaluation { node: f64, value: f64 },
    /// Configuration values are inconsistent or violate an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// The posterior grid could not be made to cover enough mass.
    #[error("posterior grid failed to capture mass after {attempts} widenings (tail mass {tail_mass:e})")]
    Coverage { attempts: usize, tail_mass: f64 },
    /// Growth constants are undefined when the true optimum sits on the boundary.
    #[error("growth constants invalid; supply manually (optimum {a_star} on boundary of [{a_min}, {a_max}])")]
    BoundaryOptimum { a_star: f64, a_min: f64, a_max: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Config(_)
                | Error::BoundaryOptimum { .. }
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}
