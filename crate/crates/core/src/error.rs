use thiserror::Error;

use crate::experiment::Witness;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile level {0} is outside (0, 1)")]
    QuantileDomain(f64),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bound violated: {0}")]
    BoundViolated(String),

    #[error("{count} per-draw implication violation(s); first: {}", witness.implication)]
    ImplicationViolated { count: u64, witness: Box<Witness> },

    #[error("unknown example id `{0}`")]
    UnknownExample(String),

    #[error("could not parse `{0}` as an exact number")]
    ParseNumber(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
