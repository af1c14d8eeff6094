//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// What went wrong while decoding a binary artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic,
    BadVersion,
    Truncated,
    DimensionOverflow,
}

impl std::fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormatErrorKind::BadMagic => write!(f, "bad magic"),
            FormatErrorKind::BadVersion => write!(f, "bad version"),
            FormatErrorKind::Truncated => write!(f, "truncated payload"),
            FormatErrorKind::DimensionOverflow => write!(f, "dimension overflow"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("{path}: {kind} at byte offset {offset}")]
    Format {
        path: String,
        offset: u64,
        kind: FormatErrorKind,
    },

    #[error("{path}: line {line}: {reason}")]
    ManifestLine {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid recipe: {0}")]
    Recipe(String),

    #[error("degenerate generation config: {0}")]
    DegenerateConfig(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("cross-validation needs at least two runs; manifest has a single run")]
    SingleRun,

    #[error("average precision undefined: no positive labels")]
    NoPositives,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code, used in the CLI's `ERROR[<code>]` prefix.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Format { .. } => "format",
            Error::ManifestLine { .. } => "manifest",
            Error::Io { .. } => "io",
            Error::Recipe(_) => "recipe",
            Error::DegenerateConfig(_) => "degenerate-config",
            Error::Dimension { .. } => "dimension",
            Error::IndexOutOfRange { .. } => "index",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Diverged { .. } => "diverged",
            Error::NonFinite(_) => "non-finite",
            Error::SingleRun => "single-run",
            Error::NoPositives => "no-positives",
        }
    }

    /// Process exit status class: 2 for data/format problems, 3 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } | Error::NonFinite(_) | Error::NoPositives => 3,
            _ => 2,
        }
    }
}
