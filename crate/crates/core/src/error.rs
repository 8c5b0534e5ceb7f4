use thiserror::Error;

/// Errors produced by the library.
///
/// Message text is part of the contract for a few variants (`empty vector`,
/// `non-finite input`, `invalid norm order`, `bad magic`) so callers and the CLI
/// can report them verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty vector")]
    EmptyVector,

    #[error("non-finite input")]
    NonFinite,

    #[error("invalid norm order: {0}")]
    InvalidNormOrder(String),

    #[error("invalid temperature {0}: must be finite and > 0")]
    InvalidTemperature(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("stale trace: {0}")]
    StaleTrace(String),

    #[error("layer index {index} out of range for a model with {layers} layers")]
    LayerOutOfRange { index: usize, layers: usize },

    #[error("method `{method}` is incompatible with {detail}")]
    Incompatible { method: String, detail: String },

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("classes missing from fit data: {0:?}")]
    MissingClasses(Vec<usize>),

    #[error("covariance not positive definite after regularization (pivot {pivot} = {value:e}); try a larger lambda")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("dimension overflow: {0}")]
    DimOverflow(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad configuration or incompatible inputs, as
    /// opposed to IO or file-format problems.
    pub fn is_config(&self) -> bool {
        !matches!(
            self,
            Error::Io(_)
                | Error::BadMagic { .. }
                | Error::UnsupportedVersion(_)
                | Error::Truncated(_)
                | Error::DimOverflow(_)
                | Error::Malformed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
