use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or argument lies outside the set it must belong to.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {family} needs at least {needed} items, got {got}")]
    InsufficientData {
        family: &'static str,
        needed: usize,
        got: usize,
    },

    /// Fisher information (or a density) is undefined at a boundary point of the parameter space.
    #[error("singular parameter for {family}: {reason}")]
    Singular { family: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The black box violated the feed-oracle contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("audit error on pair '{label}': {source}")]
    Audit {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("audit estimate is not usable ({estimate:?}): {reason}")]
    Estimate { estimate: Vec<f64>, reason: String },

    #[error("platform construction failed: {0}")]
    Construction(String),

    #[error("no inflation witness found: {0}")]
    WitnessNotFound(String),

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn with_label(self, label: &str) -> Self {
        Error::Audit {
            label: label.to_string(),
            source: Box::new(self),
        }
    }
}
