/// Failure of a command, carrying the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid or missing configuration (exit 1).
    #[error("configuration error: {0}")]
    Config(String),
    /// Unreadable, malformed or inconsistent input data (exit 2).
    #[error("data error: {0}")]
    Data(String),
    /// A bug or failed self-check (exit 3).
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<recipro::Error> for CliError {
    fn from(e: recipro::Error) -> Self {
        match e {
            recipro::Error::InvalidParam(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}
