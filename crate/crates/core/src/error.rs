use std::path::PathBuf;

use thiserror::Error;

/// Failures reported by a model, embedding, or NER backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("provider configuration error (HTTP {status}): {message}")]
    Configuration { status: u16, message: String },
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("offline mode: no cached response for {0}")]
    Offline(String),
    #[error("embedding dimension changed within a run: expected {expected}, got {actual}")]
    DimensionDrift { expected: usize, actual: usize },
    #[error("no scripted reply for prompt digest {0}")]
    Unscripted(String),
}

impl ProviderError {
    /// Whether retrying the same request could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Unavailable { .. })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate vector: {0}")]
    DegenerateVector(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("missing prompt slot(s): {}", .0.join(", "))]
    MissingSlots(Vec<String>),
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("metric skipped: {0}")]
    Skipped(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("unresolvable placeholder `{0}`")]
    UnresolvedPlaceholder(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
