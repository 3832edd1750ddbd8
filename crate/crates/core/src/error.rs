use thiserror::Error;

/// Errors produced by the toolkit. The variants map onto the CLI exit-code
/// contract: `Config` -> 2, `MissingInput` -> 3, `Numerical` -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
