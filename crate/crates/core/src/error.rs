use thiserror::Error;

/// Failures while reading an operator container.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes (not an operator file)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("byte order mismatch (file was written big-endian)")]
    Endianness,
    #[error("file is truncated")]
    Truncated,
    #[error("header checksum mismatch")]
    HeaderChecksum,
    #[error("payload checksum mismatch in record {0}")]
    PayloadChecksum(usize),
    #[error("malformed record: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature failed to reach tolerance {tol:e} for entry (m={m}, n={n})")]
    Quadrature { m: usize, n: usize, tol: f64 },
    #[error("singular tridiagonal system at step {step}")]
    SingularSystem { step: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("operator does not match run: {0}")]
    OperatorMismatch(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
