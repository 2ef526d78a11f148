use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("time change undefined: requested horizon {requested} but quadratic variation reaches only {available}")]
    Truncation { requested: f64, available: f64 },

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
