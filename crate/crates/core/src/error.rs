use thiserror::Error;

/// Errors raised by the model, solver and measurement layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A function was evaluated outside its domain (e.g. a log divergence at |m| = 1).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// Solver configuration rejected before any stepping took place.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical abort at t = {t}: {reason}")]
    NumericalAbort { t: f64, reason: String },

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),

    #[error("component cannot be estimated: {0}")]
    Unestimable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
