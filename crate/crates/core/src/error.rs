use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CorpError> = std::result::Result<T, E>;

/// Every failure the library can report. [`CorpError::category`] gives the
/// stable machine-readable tag used by the command line front end.
#[derive(Debug, Error)]
pub enum CorpError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("value {value} out of [0, 1] at image {image}, row {row}, col {col}")]
    Range {
        image: usize,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("embedding at image {image}, row {row}, col {col} has norm {norm}, expected 1 or 0")]
    NotNormalized {
        image: usize,
        row: usize,
        col: usize,
        norm: f64,
    },

    #[error("degenerate input: image {image} has an all-zero union (max) denominator")]
    Degenerate { image: usize },

    #[error("decoder registry: {0}")]
    Registry(String),

    #[error("bad magic {found:?}, expected \"CRPT\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported CRPT version {0}")]
    UnsupportedVersion(u8),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<CorpError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpError {
    pub fn category(&self) -> &'static str {
        match self {
            CorpError::Shape(_) | CorpError::NotNormalized { .. } => "shape",
            CorpError::Argument(_) | CorpError::Registry(_) => "argument",
            CorpError::Range { .. } | CorpError::Degenerate { .. } => "range",
            CorpError::BadMagic { .. }
            | CorpError::UnsupportedVersion(_)
            | CorpError::UnsupportedDtype(_)
            | CorpError::Truncated { .. }
            | CorpError::Format(_) => "format",
            CorpError::File { source, .. } => source.category(),
            CorpError::Io(_) => "io",
        }
    }

    /// Attaches the offending file to an error.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        CorpError::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        CorpError::Shape(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        CorpError::Argument(msg.into())
    }
}
