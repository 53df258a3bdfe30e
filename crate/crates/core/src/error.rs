use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid must be at least 2x2, got {n1}x{n2}")]
    TooSmall { n1: usize, n2: usize },
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
    #[error("scale factor must be at least 2, got {0}")]
    BadScale(usize),
    #[error("image {n1}x{n2} is not divisible by scale factor {m}")]
    NotDivisible { n1: usize, n2: usize, m: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("iterates diverged (non-finite value) at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model {0} is not handled by this solver")]
    WrongModel(&'static str),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("pixel data truncated: expected {expected} samples, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("invalid pixel data: {0}")]
    InvalidData(String),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    BadNoiseSigma(f64),
    #[error("png codec error: {0}")]
    Png(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
