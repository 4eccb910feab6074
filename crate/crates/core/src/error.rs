use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("class {0:?} has no samples")]
    EmptyClass(String),

    #[error("cannot stratify: class {label:?} has {count} samples, at least 3 are required")]
    Stratification { label: String, count: usize },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("{0}")]
    Data(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code used by the CLI and mirrored by the C status codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider(_) => 3,
            Error::Numeric(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Data(format!("json: {err}"))
    }
}
