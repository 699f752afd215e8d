use std::path::PathBuf;

/// Everything that can go wrong inside the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure at node (i={i}, j={j}): {msg}")]
    Numeric { i: usize, j: usize, msg: String },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("corrupt snapshot {}: {reason}", path.display())]
    CorruptSnapshot { path: PathBuf, reason: String },

    #[error("run directory {}: {reason}", path.display())]
    RunDir { path: PathBuf, reason: String },

    #[error("{source}; state dumped to {}", dump.display())]
    Failed { dump: PathBuf, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
