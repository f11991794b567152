use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid sparse vector: {0}")]
    InvalidSparseVector(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("optimizer diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("line search stalled at iteration {iteration} (last step {step:e}, gradient inf-norm {grad_norm:e})")]
    LineSearchStall {
        iteration: usize,
        step: f64,
        grad_norm: f64,
    },

    #[error("AUC undefined: input contains a single class")]
    UndefinedAuc,

    #[error("RIG undefined: empirical CTR loss is zero")]
    UndefinedRig,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("day {day} not present in stream")]
    InvalidDay { day: u32 },

    #[error("batch {batch_id}: {source}")]
    Batch {
        batch_id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_batch(self, batch_id: u32) -> Self {
        Error::Batch {
            batch_id,
            source: Box::new(self),
        }
    }
}
