use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record or sample refers to a group outside the attribute set.
    #[error("record {record}: attribute id {id} out of range (group_count = {group_count})")]
    AttributeOutOfRange {
        record: String,
        id: usize,
        group_count: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    /// A metric has no value for the given data (empty input, single class, ...).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A backward pass was handed a cache that does not belong to its forward pass.
    #[error("cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u64, expected: u64 },

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("malformed checkpoint: {0}")]
    CheckpointMalformed(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied data or configuration rather
    /// than by an internal inconsistency.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::CacheMismatch(_) | Error::Io(_) => false,
            Error::Seed { source, .. } => source.is_user_error(),
            _ => true,
        }
    }
}
