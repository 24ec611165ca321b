use std::path::PathBuf;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("property violated: {0}")]
    Violated(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Degenerate(_) => 2,
            CliError::Violated(_) => 3,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<hetflow::Error> for CliError {
    fn from(e: hetflow::Error) -> Self {
        match e {
            hetflow::Error::Degenerate(m) => CliError::Degenerate(m),
            e @ hetflow::Error::Coupling { .. } => CliError::Violated(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<hetflow::scalar::ParseScalarError> for CliError {
    fn from(e: hetflow::scalar::ParseScalarError) -> Self {
        CliError::Config(e.to_string())
    }
}
