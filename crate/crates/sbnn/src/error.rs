use thiserror::Error;

pub type Result<T> = std::result::Result<T, SbnnError>;

#[derive(Debug, Error)]
pub enum SbnnError {
    /// Shape or length disagreement between an input and its declared dimensions.
    #[error("size mismatch: {0}")]
    Size(String),

    /// A binary domain with beta = 0 or a flavor used where the other is required.
    #[error("invalid domain: {0}")]
    Domain(String),

    /// Rejected configuration or command-line argument.
    #[error("invalid config: {0}")]
    Config(String),

    /// A codec payload that cannot be decoded; `offset` is the bit position.
    #[error("corrupt stream at bit {offset}: {detail}")]
    Corrupt { offset: usize, detail: String },

    /// Malformed model container (bad magic, version, codec id, truncation).
    #[error("container format: {0}")]
    Format(String),

    /// Dataset ingestion failure.
    #[error("data: {0}")]
    Data(String),

    /// Non-finite loss or other numeric breakdown during training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SbnnError {
    pub fn corrupt(offset: usize, detail: impl Into<String>) -> Self {
        SbnnError::Corrupt {
            offset,
            detail: detail.into(),
        }
    }
}
