use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot place {requested} vehicles without overlap (placed {placed})")]
    Placement { requested: usize, placed: usize },

    #[error("polynomial evaluated at t = {t} outside [0, {duration}]")]
    OutsideDomain { t: f64, duration: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("lane {target} is not adjacent to lane {current}")]
    NonAdjacentLane { current: usize, target: usize },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("buffer holds {len} transitions, batch needs {batch}")]
    BufferTooSmall { len: usize, batch: usize },

    #[error("{path}:{line}: {msg}")]
    Record { path: String, line: usize, msg: String },

    #[error("unsupported format_version {0}")]
    FormatVersion(u32),

    #[error("missing model file {0}")]
    MissingModel(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
