use thiserror::Error;

pub type Result<T> = std::result::Result<T, WatermarkError>;

#[derive(Debug, Error)]
pub enum WatermarkError {
    #[error("insufficient context: need {needed} token(s), have {got}")]
    InsufficientContext { needed: usize, got: usize },

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    InvalidToken { token: u32, vocab_size: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("no scorable tokens")]
    NoScorableTokens,

    #[error("entropy {value} is below the minimal spike entropy {min}")]
    InvalidEntropy { value: f64, min: f64 },

    #[error("scheme {0} requires a per-token entropy trace")]
    MissingEntropyTrace(&'static str),

    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeError { expected: usize, got: usize },

    #[error("model error: {0}")]
    ModelError(String),

    #[error("configuration error: {0}")]
    ConfigError(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unsupported format version {found} (expected major {expected})")]
    UnsupportedVersion { found: String, expected: u32 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl WatermarkError {
    pub(crate) fn params(field: &'static str, reason: impl Into<String>) -> Self {
        WatermarkError::InvalidParams {
            field,
            reason: reason.into(),
        }
    }
}

impl From<serde_json::Error> for WatermarkError {
    fn from(e: serde_json::Error) -> Self {
        WatermarkError::Serde(e.to_string())
    }
}
