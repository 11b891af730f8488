use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
