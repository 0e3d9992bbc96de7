use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} has norm {norm:e}, cannot project onto the sphere")]
    ZeroRow { row: usize, norm: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("kernel bandwidth must be positive, got {0}")]
    Bandwidth(f64),

    #[error("meta-record arity mismatch: {0}")]
    ArityMismatch(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("anchor {anchor} has total similarity mass {z_hat:e} below the floor")]
    DegenerateWeights { anchor: usize, z_hat: f64 },

    #[error(
        "all meta-data in the batch are kernel-identical; the negative distribution is undefined"
    )]
    AllSimilar,

    #[error("anchor {0} has no positive")]
    NoPositive(usize),

    #[error("loss evaluation is not finite ({0})")]
    NonFiniteLoss(f64),

    #[error("rejection sampler exhausted its budget of {0} consecutive proposals")]
    RejectionBudget(u64),

    #[error("backward cache does not match the model it is applied to")]
    StaleCache,

    #[error("format error: {0}")]
    Format(String),

    #[error("class {0} is absent from the training labels")]
    DegenerateLabels(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed at epoch {epoch}, batch {batch}: {source}")]
    BatchFailed {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
