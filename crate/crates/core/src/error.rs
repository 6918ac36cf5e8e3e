use thiserror::Error;

/// Error type shared across the simulator modules.
#[derive(Debug, Error)]
pub enum CochleaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("filter design error: {0}")]
    FilterDesign(String),
    #[error("non-finite sample encountered: {0}")]
    NonFiniteSample(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("malformed event file: {0}")]
    MalformedEventFile(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CochleaError>;
