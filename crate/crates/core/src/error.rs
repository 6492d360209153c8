use alloc::string::String;

/// Every failure the toolkit reports. Variants line up with the exit-code
/// classes used by the command-line front end.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mesh ingestion failed at {simplex}: {reason}")]
    Ingestion { simplex: String, reason: String },

    #[error("unknown or malformed format: {0}")]
    Format(String),

    #[error(
        "truncation insufficient at t = {t:e}: tail bound {tail:.3e} exceeds tolerance {tolerance:.3e}; increase mode_count"
    )]
    Truncation { t: f64, tail: f64, tolerance: f64 },

    #[error(
        "eigensolver stopped after {iterations} block steps with {converged}/{requested} converged pairs (worst residual {residual:.3e})"
    )]
    Solver {
        requested: usize,
        converged: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("capability unavailable on this backend: {0}")]
    Capability(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn capability(what: impl Into<String>) -> Error {
    Error::Capability(what.into())
}

pub(crate) fn shape(what: impl Into<String>) -> Error {
    Error::Shape(what.into())
}
