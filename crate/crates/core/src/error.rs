use thiserror::Error;

/// Errors raised by the jitter models, estimators and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {error:e})")]
    QuadratureNonConvergence { a: f64, b: f64, error: f64 },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("missing measurement for pair ({0}, {1})")]
    MissingPair(usize, usize),

    #[error("duplicate pair ({0}, {1})")]
    DuplicatePair(usize, usize),

    #[error("ground-truth phases were not recorded for this stream")]
    MissingPhases,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}
