use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty support: every softmax position is masked")]
    EmptySupport,
    #[error("undefined cosine: zero vector")]
    UndefinedCosine,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value {what} at block {block}, index {index}")]
    NonFinite {
        what: &'static str,
        block: usize,
        index: usize,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("training diverged at epoch {epoch} ({phase}): loss {loss}")]
    Diverged {
        epoch: usize,
        phase: &'static str,
        loss: f64,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Graph(#[from] tkg::TkgError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
