use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{0}` must be strictly positive and finite")]
    NonPositiveParameter(&'static str),

    #[error("effective discount rate theta = {theta} is not positive")]
    InsufficientDrift { theta: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("threshold level is not positive (log argument {arg})")]
    DegenerateThreshold { arg: f64 },

    #[error("barrier level is not positive (log argument {arg})")]
    DegenerateBarrier { arg: f64 },

    #[error("Levy measure integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("invalid Levy measure: {0}")]
    InvalidMeasure(String),

    #[error("exponent {rate} is at or above the gain-size rate {beta}")]
    ExponentAtOrAboveBeta { rate: f64, beta: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("solution does not match model: {0}")]
    SolutionMismatch(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification shared by the CLI exit codes and the C ABI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Degenerate,
    Internal,
}

impl Error {
    /// Variant name, as printed on standard error by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonPositiveParameter(_) => "NonPositiveParameter",
            Error::InsufficientDrift { .. } => "InsufficientDrift",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::DegenerateThreshold { .. } => "DegenerateThreshold",
            Error::DegenerateBarrier { .. } => "DegenerateBarrier",
            Error::DivergentIntegral(_) => "DivergentIntegral",
            Error::InvalidMeasure(_) => "InvalidMeasure",
            Error::ExponentAtOrAboveBeta { .. } => "ExponentAtOrAboveBeta",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::SolutionMismatch(_) => "SolutionMismatch",
            Error::Json(_) => "Json",
            Error::Io(_) => "Io",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateThreshold { .. } | Error::DegenerateBarrier { .. } => {
                ErrorClass::Degenerate
            }
            Error::ExponentAtOrAboveBeta { .. } | Error::Io(_) => ErrorClass::Internal,
            _ => ErrorClass::Validation,
        }
    }
}
