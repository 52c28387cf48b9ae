use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },
    #[error("record {index} diverged twice (seeds {first_seed:#018x}, {retry_seed:#018x})")]
    RecordDiverged {
        index: u64,
        first_seed: u64,
        retry_seed: u64,
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
