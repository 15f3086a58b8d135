use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("axis {axis} out of range for a field with {ndim} axes")]
    AxisOutOfRange { axis: usize, ndim: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("exponential weight overflow: exponent {exponent:.1} exceeds {limit}")]
    Overflow { exponent: f64, limit: f64 },
    #[error("non-contraction: residual ratio {ratio:.3e} >= 1 for {streak} consecutive iterations")]
    NonContraction { ratio: f64, streak: usize },
    #[error("norm blow-up detected at t = {t:.4e}")]
    BlowUp { t: f64 },
    #[error("memory guard: {0}")]
    MemoryGuard(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
