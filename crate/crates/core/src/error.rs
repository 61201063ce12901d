use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("only {carved} of {k} threshold carvings are nonempty at tau = {tau}; a larger tau may succeed")]
    TooFewCarvings { carved: usize, k: usize, tau: f64 },

    #[error("not stable: {0}")]
    NotStable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("metric violation: d({i},{k}) = {dik} > d({i},{j}) + d({j},{k}) = {bound}")]
    MetricViolation {
        i: usize,
        j: usize,
        k: usize,
        dik: f64,
        bound: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Infeasible,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Infeasible(_)
            | Error::NoSolution(_)
            | Error::MetricViolation { .. }
            | Error::TooFewCarvings { .. }
            | Error::NotStable(_) => ErrorClass::Infeasible,
            Error::Invariant(_) => ErrorClass::Internal,
            _ => ErrorClass::Usage,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
