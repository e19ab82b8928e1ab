use thiserror::Error;

/// Errors raised anywhere in the simulation and analysis chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("invalid config: {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("insufficient statistics: {0}")]
    Statistics(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed timestamp data at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid { field: field.into(), reason: reason.into() }
    }

    /// Process exit status for the command-line contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigParse(_) | Error::ConfigInvalid { .. } => 2,
            Error::Numerical(_) => 3,
            Error::Statistics(_) => 4,
            Error::InvalidInput(_) | Error::Format { .. } | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
