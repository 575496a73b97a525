use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("label {value} at pixel {index} is out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        value: usize,
        classes: usize,
    },

    #[error("probability {value} at pixel {pixel}, class {class} is outside [0, 1]")]
    ProbabilityOutOfRange {
        pixel: usize,
        class: usize,
        value: f64,
    },

    #[error("probabilities at pixel {pixel} sum to {sum}, not 1")]
    SimplexViolation { pixel: usize, sum: f64 },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },

    #[error("unknown loss `{name}`; available: {available}")]
    UnknownLoss { name: String, available: String },

    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Malformed tensor or image files. Each variant maps to a distinct
/// diagnostic code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic {found:?} at byte 0")]
    BadMagic { found: [u8; 4] },

    #[error("unknown dtype {0} at byte 4")]
    UnknownDtype(u8),

    #[error("invalid header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },

    #[error("truncated payload: expected {expected} bytes, found {found} (starting at byte {offset})")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("{count} trailing bytes after payload at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },

    #[error("dtype mismatch: file holds {found}, caller expected {expected}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("unsupported image: {0}")]
    Unsupported(String),
}

impl FormatError {
    /// Stable short code used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::BadMagic { .. } => "bad-magic",
            FormatError::UnknownDtype(_) => "bad-dtype",
            FormatError::BadHeader { .. } => "bad-header",
            FormatError::Truncated { .. } => "truncated",
            FormatError::TrailingBytes { .. } => "trailing-bytes",
            FormatError::DtypeMismatch { .. } => "dtype-mismatch",
            FormatError::Unsupported(_) => "unsupported",
        }
    }
}

impl Error {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}
