use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
