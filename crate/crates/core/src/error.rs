use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition. `field` names the
    /// offending input so HTTP and CLI errors can point at it.
    #[error("invalid {field}: {message}")]
    InvalidInput { field: String, message: String },

    #[error("corrupt dataset: record {record}: {reason}")]
    CorruptDataset { record: String, reason: String },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: u64, loss: f64 },

    #[error("config digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::InvalidInput {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the caller's input rather than by the program or the
    /// environment.
    /// A missing file counts as the caller's: it names a path that does not exist.
    pub fn is_user_error(&self) -> bool {
        match self {
            Self::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => matches!(
                self,
                Self::InvalidInput { .. } | Self::DigestMismatch { .. } | Self::Config(_) | Self::CorruptDataset { .. }
            ),
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidInput { .. } => "invalid_input",
            Self::CorruptDataset { .. } => "corrupt_dataset",
            Self::Diverged { .. } => "diverged",
            Self::DigestMismatch { .. } => "digest_mismatch",
            Self::Checkpoint(_) => "checkpoint",
            Self::Io { .. } => "io",
            Self::Image(_) => "image",
            Self::Json(_) => "json",
            Self::Config(_) => "config",
        }
    }
}
