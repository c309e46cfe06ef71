use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dialogue `{dialogue_id}`, turn {turn}, field `{field}`: {message}")]
    Corpus {
        dialogue_id: String,
        turn: usize,
        field: String,
        message: String,
    },
    #[error("unknown system act type `{0}`")]
    UnknownActType(String),
    #[error("system act `{0}` carries a value but no slot")]
    ValueWithoutSlot(String),
    #[error("overlapping slot spans {first:?} and {second:?}")]
    OverlappingSpans {
        first: (String, usize, usize),
        second: (String, usize, usize),
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("vocabulary mismatch: checkpoint vocab hash {checkpoint}, data label hash {data}")]
    VocabMismatch { checkpoint: String, data: String },
    #[error("config: {0}")]
    Config(String),
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("metrics: {0}")]
    Metrics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
