use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("non-finite value at tape node {node} ({op})")]
    NonFiniteNode { node: usize, op: &'static str },
    #[error("non-finite state in trajectory {trajectory} at step {step}")]
    NonFiniteState { trajectory: usize, step: usize },
    #[error("non-finite {which} gradient")]
    NonFiniteGradient { which: &'static str },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numbers rather than by the caller's
    /// inputs (non-finite states, nodes or gradients).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFiniteNode { .. }
            | Error::NonFiniteState { .. }
            | Error::NonFiniteGradient { .. } => true,
            Error::AtIteration { source, .. } => source.is_numeric(),
            Error::Dimension { .. } | Error::Invalid { .. } => false,
        }
    }
}
