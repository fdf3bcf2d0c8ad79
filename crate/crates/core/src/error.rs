use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid mode index {mode} for a tensor of order {order}")]
    InvalidMode { mode: usize, order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not positive definite (regularizer {eps:e}, pivot {pivot} at {index})")]
    NotPositiveDefinite { eps: f64, index: usize, pivot: f64 },

    #[error("requested {requested} eigenpairs of a {dim}x{dim} problem")]
    TooManyEigenpairs { requested: usize, dim: usize },

    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("objective undefined: projected positive scatter is zero")]
    ZeroDenominator,

    #[error("training set contains a single class")]
    SingleClass,

    #[error("kernel of size {kernel_rows}x{kernel_cols} does not fit a {rows}x{cols} image")]
    KernelTooLarge {
        kernel_rows: usize,
        kernel_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("missing landmark point id {0}")]
    MissingPoint(u32),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
