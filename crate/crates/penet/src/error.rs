use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input too short: length {len}, need at least {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite training loss in a batch with record seeds {seeds:?}")]
    NonFiniteLoss { seeds: Vec<u64> },
    #[error("report error: {0}")]
    Report(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] penet_core::Error),
    #[error(transparent)]
    Tensor(#[from] tensor_grad::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
