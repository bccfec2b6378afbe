use thiserror::Error;

/// Errors produced by the stopping engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("hard cap of {cap} exercise indices reached before the horizon")]
    CapExhausted { cap: usize },

    #[error("truncation criterion not met below cap {cap}: tail estimate {tail:.6} + 2 s.e. {se:.6}")]
    TruncationFailed { cap: usize, tail: f64, se: f64 },

    #[error("policy cannot be decided from grid data alone")]
    NotGridDecidable,

    #[error("malformed text: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
