use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A state, symbol or observable does not belong to the system it is used with.
    #[error("domain error: {0}")]
    Domain(String),
    /// An argument violates the operation's preconditions.
    #[error("argument error: {0}")]
    Argument(String),
    /// A requested size exceeds what can be represented (e.g. an lcm overflow).
    #[error("capacity error: {0}")]
    Capacity(String),
    /// The data contradicts a certified inequality (e.g. an inverted bracket).
    #[error("data quality error: {0}")]
    DataQuality(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Argument(_) => "argument",
            Error::Capacity(_) => "capacity",
            Error::DataQuality(_) => "data_quality",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
