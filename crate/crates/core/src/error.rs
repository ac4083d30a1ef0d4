use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ZsmlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ZsmlError {
    #[error("{source_name}: line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("label `{0}` not in embedding file")]
    MissingLabel(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Input outside the domain of an operation (zero vectors under cosine, empty sets).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("power set of {labels} labels exceeds the cap of {cap} (2^{labels} - 1 prototypes would be materialized); reduce the label count or raise the cap explicitly")]
    PowerSetCap { labels: usize, cap: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl ZsmlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZsmlError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        ZsmlError::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        ZsmlError::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 1 for usage errors, 2 for data and validation errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ZsmlError::Usage(_) => 1,
            _ => 2,
        }
    }
}
