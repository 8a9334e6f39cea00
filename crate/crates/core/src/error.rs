use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("degenerate tensor: {0}")]
    DegenerateTensor(String),

    #[error("empty tensor")]
    EmptyTensor,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("index {index} at position {position} does not fit in {bits} bits")]
    IndexOverflow { index: u32, position: usize, bits: u8 },

    #[error("unsupported bit width {0}; expected one of 1, 2, 4, 8")]
    UnsupportedBits(u32),

    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("invalid shape: {0}")]
    BadShape(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("value must be positive: {0}")]
    NonPositive(String),

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name, used for CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "NonFinite",
            Error::DegenerateTensor(_) => "DegenerateTensor",
            Error::EmptyTensor => "EmptyTensor",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::IndexOverflow { .. } => "IndexOverflow",
            Error::UnsupportedBits(_) => "UnsupportedBits",
            Error::BadMagic(_) => "BadMagic",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::Truncated { .. } => "Truncated",
            Error::BadShape(_) => "BadShape",
            Error::ZeroNorm => "ZeroNorm",
            Error::NonPositive(_) => "NonPositive",
            Error::BadConfig(_) => "BadConfig",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
