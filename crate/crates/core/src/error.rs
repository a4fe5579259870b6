use thiserror::Error;

/// Errors produced anywhere in the quantization pipeline.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("payload mismatch: {0}")]
    PayloadMismatch(String),
    #[error("scale overflow: {0}")]
    ScaleOverflow(String),
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("bad magic: expected \"LPQT\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: {0}")]
    TruncatedPayload(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dequantization path unavailable: {0}")]
    PathUnavailable(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable snake_case identifier, used for machine-parsable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidScheme(_) => "invalid_scheme",
            Error::InvalidCode(_) => "invalid_code",
            Error::PayloadMismatch(_) => "payload_mismatch",
            Error::ScaleOverflow(_) => "scale_overflow",
            Error::ShapeError(_) => "shape_error",
            Error::BadMagic(_) => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::TruncatedPayload(_) => "truncated_payload",
            Error::InvariantViolation(_) => "invariant_violation",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::PathUnavailable(_) => "path_unavailable",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
