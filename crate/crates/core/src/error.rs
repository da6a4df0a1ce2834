use thiserror::Error;

/// Errors raised by the segmentation pipeline and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid image dimensions {width}x{height} for {len} data bytes")]
    InvalidImage { width: usize, height: usize, len: usize },

    #[error("block size {0} is below the minimum of 8 pixels")]
    BlockTooSmall(usize),

    #[error("invalid percentile range [{low}, {high}]")]
    InvalidPercentiles { low: f64, high: f64 },

    #[error("degenerate block: {0} pixel(s), need at least 2")]
    DegenerateBlock(usize),

    #[error("constant block: covariance trace is zero")]
    ConstantBlock,

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("peaks at bins {0} and {1} are adjacent, no valley between them")]
    AdjacentPeaks(usize, usize),

    #[error("expected exactly two qualifying peaks, found {0}")]
    NotBimodal(usize),

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("ground truth has no instances, score is undefined")]
    EmptyGroundTruth,

    #[error("label {0} does not exist")]
    NoSuchLabel(u32),

    #[error("invalid synthetic parameters: {0}")]
    InvalidSynthParams(String),

    #[error("placed only {placed} of {requested} nuclei within {attempts} attempts")]
    PlacementFailed { placed: usize, requested: usize, attempts: usize },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
