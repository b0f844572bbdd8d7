use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure in {location}: {detail}")]
    Numerical { location: String, detail: String },

    #[error("PGM format error in {path} at byte {offset}: {detail}")]
    Pgm {
        path: PathBuf,
        offset: usize,
        detail: String,
    },

    #[error("manifest error in {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error("checkpoint error in {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },

    #[error("scene generation failed for seed {seed} after {attempts} attempts")]
    Generation { seed: u64, attempts: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {detail}")]
    Stage { stage: String, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Numerical { .. } => "numerical",
            Error::Pgm { .. } => "pgm",
            Error::Manifest { .. } => "manifest",
            Error::Checkpoint { .. } => "checkpoint",
            Error::Generation { .. } => "generation",
            Error::Config(_) => "config",
            Error::Stage { .. } => "stage",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    /// The pipeline stage an error was raised in, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
