use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("entry ({row}, {col}) out of bounds for a {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square ({n_rows}x{n_cols})")]
    NotSquare { n_rows: usize, n_cols: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("row {row} has a missing or non-positive diagonal entry ({value})")]
    BadDiagonal { row: usize, value: f64 },

    #[error("column {col} is identically zero")]
    ZeroColumn { col: usize },

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix of dimension {n} exceeds the dense size cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("enumeration of {count} direction sequences exceeds the cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("power iteration did not converge in {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("delay schedule violates the bounded-delay model at iteration {iteration}: {msg}")]
    ScheduleViolation { iteration: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("collision instrumentation was not enabled for this run")]
    InstrumentationDisabled,

    #[error("failed to spawn worker thread: {0}")]
    Spawn(String),
}
