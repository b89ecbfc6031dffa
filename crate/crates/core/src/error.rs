use thiserror::Error;

/// Errors raised anywhere in the classification pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("every category assigns zero mass to the observation")]
    AllZeroMass,

    #[error("block index {block} out of range (space has {blocks} blocks)")]
    BlockOutOfRange { block: usize, blocks: usize },

    #[error("{what} = {value} out of range (max {max})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("reward does not fit the category space: {0}")]
    SpecSpaceMismatch(String),

    #[error("penalty sequence is not convex with g(0) = 0")]
    NotConvex,

    #[error("unsupported reward for this operation: {0}")]
    UnsupportedReward(&'static str),

    #[error("exhaustive search limited to {max} categories, got {got}")]
    TooManyCategories { got: usize, max: usize },

    #[error("category {0} has no training observations")]
    EmptyCategory(usize),

    #[error("category {category} has {count} observations, at least {required} required")]
    CategoryTooSmall {
        category: usize,
        count: usize,
        required: usize,
    },

    #[error("scatter matrix is not positive definite ({0})")]
    SingularScatter(String),

    #[error("no grid value of b satisfies non-reward rate <= {delta}")]
    NoFeasibleB { delta: f64 },

    #[error("rarity weights need a strictly positive real prior")]
    MissingRealPrior,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
