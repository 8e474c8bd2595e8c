use thiserror::Error;

/// CLI-level errors, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("schema mismatch: {0}")]
    Schema(String),
}

impl CliError {
    /// 2 = input error, 3 = solver failure, 4 = schema mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Schema(_) => 4,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        CliError::Schema(msg.into())
    }
}

impl From<packs::Error> for CliError {
    fn from(e: packs::Error) -> Self {
        match e {
            packs::Error::Solver { .. } => CliError::Solver(e.to_string()),
            packs::Error::Io(io) => CliError::Io(io),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
