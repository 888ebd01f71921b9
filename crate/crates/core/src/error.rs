use thiserror::Error;

#[derive(Debug, Error)]
pub enum PclmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("coordinate {value} outside basis domain [{min}, {max}]")]
    Domain { value: f64, min: f64, max: f64 },

    #[error("numerical failure{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical { message: String, iteration: Option<usize> },

    #[error("resource budget exceeded: {requested} elements requested, budget is {budget}")]
    Resource { requested: u128, budget: u128 },
}

impl PclmError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        PclmError::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PclmError::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        PclmError::Numerical { message: msg.into(), iteration: None }
    }

    /// Attach an iteration index to a numerical failure; other variants pass through.
    pub fn at_iteration(self, iter: usize) -> Self {
        match self {
            PclmError::Numerical { message, .. } => PclmError::Numerical { message, iteration: Some(iter) },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, PclmError>;
