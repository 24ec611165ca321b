use crate::scalar::ParseScalarError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range for {len} particles")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("particle and obstacle configurations live on different domains")]
    DomainMismatch,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("observer aborted at t={time}: {message}")]
    Observer { time: u64, message: String },
    #[error("no snapshot recorded at t={0}")]
    MissingSnapshot(u64),
    #[error("coupling consistency violated at t={time}: {detail}")]
    Coupling { time: u64, detail: String },
    #[error(transparent)]
    Parse(#[from] ParseScalarError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
