use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate aspect ratio: all points are identical")]
    DegenerateAspectRatio,

    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("non-finite fidelity at iteration {iteration}")]
    NonFiniteFidelity { iteration: usize },

    #[error("step-size collapse at iteration {iteration}: {shrinks} shrinkage steps without acceptance")]
    StepSizeCollapse { iteration: usize, shrinks: usize },

    #[error("empty mask: no voxel passes the proton density threshold")]
    EmptyMask,

    #[error("unknown phantom layout `{0}`")]
    UnknownLayout(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { expected, found }
    }
}
