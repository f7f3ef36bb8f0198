use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("column {0} is numerically rank deficient")]
    RankDeficient(usize),
    #[error("tridiagonal eigensolver did not converge for eigenvalue {0}")]
    ConvergenceFailure(usize),
    #[error("prior precision must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("non-finite training loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
