use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("unsupported network structure: {0}")]
    UnsupportedStructure(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("{} pixel(s) not covered by any patch, first at (row {}, col {})", .pixels.len(), .pixels[0].0, .pixels[0].1)]
    Coverage { pixels: Vec<(usize, usize)> },

    #[error("non-finite objective at iteration {iteration}")]
    Divergence { iteration: usize, iterate: Vec<f64> },

    #[error("training failed on minibatch {minibatch}: {source}")]
    Training {
        minibatch: usize,
        /// Parameters after the last minibatch that finished cleanly.
        last_good: Box<crate::nn::NetworkParams>,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by non-finite values during computation.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NumericFailure(_) | Error::Divergence { .. } => true,
            Error::Training { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
