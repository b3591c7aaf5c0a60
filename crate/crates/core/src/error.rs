use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes that cannot be combined.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    /// A numeric argument outside its admissible range.
    #[error("invalid parameter {name}: {detail}")]
    Parameter { name: &'static str, detail: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {detail}")]
    Format {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("unknown tag {tag:?}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    UnknownTag {
        tag: String,
        context: Option<String>,
    },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures reading a model container. A container that fails any check is
/// rejected whole.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("not a model container (bad magic bytes)")]
    BadMagic,
    #[error("unsupported container version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("container truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("model has no {0} head")]
    Capability(&'static str),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
