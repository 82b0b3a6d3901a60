use thiserror::Error;

/// Errors produced by the sampling, learning and oracle routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid mode: {0}")]
    Mode(String),

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
