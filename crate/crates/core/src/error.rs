use thiserror::Error;

/// Errors produced by the retargeting toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model parse error: {0}")]
    ModelParse(String),

    #[error("model invariant violated ({rule}): {message}")]
    ModelInvariant { rule: &'static str, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for {context} (len {len})")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {quantity} at step {step}")]
    NonFinite { quantity: String, step: usize },

    #[error("objective everywhere invalid")]
    ObjectiveInvalid,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn mismatch(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
