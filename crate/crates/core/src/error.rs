use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside a function's mathematical domain (e.g. NaN).
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller broke an operation's precondition (shape, length, range).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    /// Differential grouping ran out of evaluations before finishing.
    #[error("evaluation budget exhausted after probing {pairs_probed} pairs")]
    BudgetExhausted {
        pairs_probed: usize,
        interactions: Vec<(usize, usize)>,
    },

    #[error("non-finite loss at batch index {index}")]
    NonFiniteLoss { index: usize },

    #[error("context invalidated for subproblem {subproblem}, optimizer {optimizer}: {reason}")]
    ContextInvalidated {
        subproblem: usize,
        optimizer: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
