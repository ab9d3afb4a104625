use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    Validation(String),

    #[error("site index {index} out of range 1..={n_sites}")]
    SiteIndex { index: usize, n_sites: usize },

    /// The effective bath couplings differ by more than the requested tolerance.
    #[error("effective bath couplings are heterogeneous: spread {spread:e} exceeds {allowed:e}")]
    Heterogeneous { spread: f64, allowed: f64 },

    #[error("no peak above the floor was found")]
    PeakNotFound,

    #[error("series is empty")]
    EmptySeries,

    #[error("coupling J[{index}] = {value} outside bounds [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("full-sector dimension {dimension} exceeds the cap of {cap}")]
    DimensionCap { dimension: usize, cap: usize },

    #[error("evaluation budget exhausted before any objective evaluation")]
    BudgetExhausted,

    #[error("eigensolver failed to converge")]
    Eigensolver,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
