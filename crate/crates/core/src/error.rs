use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("cluster id {id} out of range for k = {k}")]
    ClusterOutOfRange { id: usize, k: usize },

    #[error("sample representation does not match cluster space metric {0}")]
    RepresentationMismatch(&'static str),

    #[error("layer `{layer}`: expected {expected}, got {actual}")]
    Shape {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("{0} has not been trained")]
    Untrained(&'static str),

    #[error("config validation failed: {0}")]
    Config(String),

    #[error("artifact lineage mismatch: expected {expected}, found {found}")]
    Lineage { expected: String, found: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Lineage { .. } => 3,
            Error::Divergence(_) | Error::NonFiniteGradient(_) => 4,
            _ => 1,
        }
    }
}
