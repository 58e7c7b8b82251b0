use thiserror::Error;

/// Errors raised by fitting, prediction and the diagnostics.
#[derive(Debug, Error)]
pub enum FigsError {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("leaf sample sets do not match the supplied dataset")]
    StaleLeaves,

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("both classes must be present")]
    SingleClass,

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("invalid model document: {0}")]
    InvalidModel(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FigsError>;
