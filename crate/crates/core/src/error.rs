use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnsmError {
    /// An argument fell outside the domain of a function.
    #[error("domain error in {func}: {detail}")]
    Domain {
        func: &'static str,
        detail: String,
    },
    /// A parameter set violated its type invariants.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    /// Two inputs that must align had different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// A mixture density vanished or became non-finite at an observation.
    #[error("numeric failure at observation {index}: {detail}")]
    Numeric { index: usize, detail: String },
    /// A fitted component collapsed onto a degenerate configuration.
    #[error("degenerate component: {0}")]
    Degenerate(String),
    /// Input data could not be used.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl SnsmError {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        SnsmError::Domain {
            func,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SnsmError>;
