use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Factorization or likelihood evaluation broke down.
    #[error("numerical failure{}: {message}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        message: String,
        iteration: Option<usize>,
    },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// An operation was called on an object in the wrong state, e.g. a mean
    /// shift requested from an independent prior.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("too few draws: {got} kept, at least {needed} required")]
    InsufficientDraws { got: usize, needed: usize },

    #[error("experiment failed: {failed} of {total} replicates failed")]
    ExperimentFailed { failed: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            iteration: None,
        }
    }

    pub(crate) fn at_iteration(self, iter: usize) -> Self {
        match self {
            Error::Numerical { message, .. } => Error::Numerical {
                message,
                iteration: Some(iter),
            },
            other => other,
        }
    }
}
