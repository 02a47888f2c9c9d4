//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),

    #[error("truncated NIfTI file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("unsupported datatype: {0}")]
    UnsupportedDatatype(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("slice index out of range: {index} not in [0, {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sweep center ({x}, {y}) lies outside the {width}x{height} image")]
    DegenerateCenter { x: i64, y: i64, width: usize, height: usize },

    #[error("no subcutaneous fat found (no ray crossed a fat boundary)")]
    NoSubcutaneousFat,

    #[error("ratio is not finite: {0}")]
    NonFiniteRatio(f64),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),

    #[error("confusion counts are all zero")]
    EmptyCounts,

    #[error("relative error undefined for a zero reference")]
    ZeroReference,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("unknown label {0:?} (expected CD or ITB)")]
    UnknownLabel(String),

    #[error("stride must be at least 1")]
    InvalidStride,

    #[error("probability series is empty")]
    EmptySeries,

    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),

    #[error("invalid phantom geometry: {0}")]
    InvalidGeometry(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("{path}: line {line}: {message}")]
    Csv { path: String, line: u64, message: String },
}
