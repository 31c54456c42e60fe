use alloc::string::String;

/// Errors raised by the numerical and parsing core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Input on which the measure is mathematically undefined (e.g. an
    /// all-zero attention vector).
    #[error("undefined input: {0}")]
    UndefinedInput(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("design matrix is rank deficient ({rank} of {columns} columns independent)")]
    RankDeficient { rank: usize, columns: usize },
    #[error("unknown {scale} label {label:?}")]
    UnknownLabel { scale: &'static str, label: String },
    #[error("unknown level {0:?}")]
    UnknownLevel(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
