use alloc::string::String;
use thiserror::Error;

use crate::model::StateId;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid feature space: {0}")]
    FeatureSpace(String),

    #[error("observation has {got} entries, feature space has {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value {value} out of range for feature {feature} (domain size {domain})")]
    ValueOutOfRange { feature: usize, value: u32, domain: u32 },

    #[error("state {0} out of range")]
    StateOutOfRange(StateId),

    #[error("action {0} out of range")]
    ActionOutOfRange(usize),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid m-graph: {0}")]
    InvalidGraph(String),

    #[error("m-graph contains a cycle through R{0}")]
    GraphCycle(usize),

    #[error("feature {0} is declared always observed and has no indicator node")]
    NoIndicatorNode(usize),

    #[error("observation has zero likelihood under the current belief")]
    ImpossibleObservation,

    #[error("all counters are zero and kappa is 0")]
    EmptyCounts,

    #[error("learner assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("exact oracle exceeded its node cap of {0}")]
    NodeCapExceeded(usize),

    #[error("empty belief set")]
    EmptyBeliefSet,

    #[error("degenerate normalization: optimal and prior values coincide")]
    DegenerateNormalization,
}

pub type Result<T> = core::result::Result<T, Error>;
