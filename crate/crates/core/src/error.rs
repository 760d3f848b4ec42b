use thiserror::Error;

/// Errors raised by kernel construction, fitting and evaluation.
#[derive(Debug, Error)]
pub enum ScoreError {
    /// Malformed or out-of-range caller input (dimensions, parameters, files).
    #[error("invalid input: {0}")]
    Input(String),

    /// An operation was called on an object that does not support it.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN/inf appeared in a computation that must stay finite.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A direct or iterative linear solve failed.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A dense allocation would exceed the configured budget.
    #[error("resource limit: {0}")]
    Resource(String),

    /// The sample set carries no usable information (duplicates, rank zero).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl ScoreError {
    /// Process exit code used by the command line tool: 1 for input
    /// problems, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScoreError::Input(_)
            | ScoreError::Contract(_)
            | ScoreError::Io(_)
            | ScoreError::Csv(_)
            | ScoreError::Resource(_) => 1,
            ScoreError::Numeric(_) | ScoreError::Solver(_) | ScoreError::Degenerate(_) => 2,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        ScoreError::Input(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        ScoreError::Contract(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        ScoreError::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, ScoreError>;
