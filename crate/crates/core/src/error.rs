use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {mode} out of range for a tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid mode permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("factor columns are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("reflector {column} has sub-diagonal norm {norm} >= 1")]
    InvalidReflector { column: usize, norm: f64 },

    #[error("corrupt payload in {section}: {detail}")]
    Corrupt { section: String, detail: String },

    #[error("truncated input: missing {0}")]
    Truncated(String),

    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("unknown data type id {0}")]
    UnknownDataType(u8),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn corrupt(section: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Corrupt {
            section: section.into(),
            detail: detail.into(),
        }
    }
}
