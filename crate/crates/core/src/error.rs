use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped by how a caller is expected to react: bad input
/// (`Validation`, `Domain`, `Protocol`, `Data`), numerical breakdown
/// (`Numerical`), broken internal assumptions (`Internal`) and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the numerics rather than by the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Internal(_))
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::Protocol(_) => "protocol",
            Error::Data(_) => "data",
            Error::Numerical(_) => "numerical",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
