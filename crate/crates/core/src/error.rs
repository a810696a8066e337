use thiserror::Error;

/// Errors raised by codebook construction, hashing, training and experiment plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid pose: {0}")]
    Pose(String),

    #[error("fresnel integral requires a non-negative argument, got {0}")]
    NegativeFresnelArgument(f64),

    #[error("projection threshold must lie strictly inside (0, 1), got {0}")]
    ThresholdOutOfRange(f64),

    #[error("bucket count {buckets} does not divide universe size {universe}")]
    IndivisibleUniverse { universe: usize, buckets: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
