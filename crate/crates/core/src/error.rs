use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coordinate {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("rotation must act on two distinct coordinates, got ({0}, {0})")]
    DegenerateRotation(usize),

    #[error("constant gate needs a finite nonzero scalar, got {0}")]
    InvalidConstant(f64),

    #[error("rotation angle must be finite, got {0}")]
    InvalidAngle(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("step {t} out of range 0..={m}")]
    StepOutOfRange { t: usize, m: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("final matrix is not the Walsh-Hadamard matrix (max entry error {0:e})")]
    NotWalshHadamard(f64),

    #[error("incremental potential drifted by {drift:e} at step {t}")]
    PotentialDrift { t: usize, drift: f64 },

    #[error("projection of basis candidate degenerated (norm {0:e})")]
    DegenerateProjection(f64),

    #[error("matrix is not a positive semi-definite contraction: {0}")]
    NotPsdContraction(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
