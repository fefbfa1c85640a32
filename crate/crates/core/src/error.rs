use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("missing prerequisite artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("{artifact} was produced by config {found}, current config is {expected} (use --force to override)")]
    ConfigMismatch {
        artifact: PathBuf,
        expected: String,
        found: String,
    },

    #[error("training diverged at update {step}: non-finite loss")]
    Diverged { step: usize },

    #[error(transparent)]
    Autodiff(#[from] kpgen_autodiff::AutodiffError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
