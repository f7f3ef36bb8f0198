use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] slu_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: truncated file ({needed} bytes needed, {available} available)")]
    TruncatedFile { path: PathBuf, needed: usize, available: usize },
    #[error("{path}: {what}")]
    Format { path: PathBuf, what: String },
    #[error("{0}")]
    Config(String),
    #[error("missing {flag}: {why}")]
    MissingFlag { flag: &'static str, why: &'static str },
    #[error("basis file {path} has no {field}; {hint}")]
    MissingField { path: PathBuf, field: &'static str, hint: &'static str },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, what: impl Into<String>) -> Self {
        Error::Format { path: path.into(), what: what.into() }
    }

    pub fn exit_code(&self) -> i32 {
        use slu_core::Error as C;
        match self {
            Error::Core(C::NonFiniteLoss { .. }) => exit::DIVERGED,
            Error::Core(C::RankDeficient(_) | C::ConvergenceFailure(_)) => exit::NUMERICAL,
            _ => exit::CONFIG,
        }
    }
}
