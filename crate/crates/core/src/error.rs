use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{0}: no frames found")]
    NoFrames(PathBuf),
    #[error("{path}: inconsistent dimensions, expected {expected:?} got {found:?}")]
    InconsistentDimensions { path: PathBuf, expected: (usize, usize), found: (usize, usize) },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("frame size {0}x{1} is not a multiple of 128")]
    NotMultipleOf128(usize, usize),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("clip `{0}` is empty")]
    EmptyClip(String),
    #[error("clip length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid split fractions {0:?}: must be non-negative and sum to 1")]
    InvalidFractions([f64; 3]),
    #[error("need at least 2 clips to form pairs, got {0}")]
    NotEnoughClips(usize),
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("architecture hash mismatch: checkpoint has {found}, expected {expected}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error("model bundle is not trained ({0})")]
    Untrained(&'static str),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("non-finite loss at step {step}: h={h_loss} r={r_loss}")]
    NonFiniteLoss { step: usize, h_loss: f64, r_loss: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("patch at ({x},{y}) size {size} lies outside a {width}x{height} frame")]
    PatchOutOfBounds { x: usize, y: usize, size: usize, width: usize, height: usize },
    #[error("leak budget {budget} exceeds the {available} available training pairs")]
    BudgetExceedsData { budget: usize, available: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
