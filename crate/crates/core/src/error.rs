use thiserror::Error;

/// Errors raised by tensor kernels, factorizations, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mode {mode} out of range for a tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("mode {0} appears more than once in a multi-TTM")]
    DuplicateMode(usize),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("singular triangular factor at column {column}: |diag| = {value:e} <= threshold {threshold:e}")]
    SingularTriangular { column: usize, value: f64, threshold: f64 },

    #[error("stale intermediate: {0}")]
    Stale(String),

    #[error("unsupported tensor order {order} for the {strategy} schedule")]
    UnsupportedOrder { order: usize, strategy: String },

    #[error("input tensor has zero Frobenius norm")]
    ZeroNorm,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
