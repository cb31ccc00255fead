use thiserror::Error;

use crate::gamp::GampTrace;
use crate::model::SpecViolation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", join(.0))]
    InvalidSpec(Vec<SpecViolation>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{value} is not a level of the {bits}-bit codebook with step {step}")]
    OffCodebook { value: f64, bits: u32, step: f64 },

    #[error("density is not normalizable (log mass {log_mass})")]
    NotNormalizable { log_mass: f64 },

    #[error("non-finite {quantity} at layer {layer}, index {index} (iteration {iteration})")]
    NonFinite { quantity: &'static str, layer: usize, index: usize, iteration: usize },

    #[error("estimator diverged at iteration {iteration}: {cause}")]
    Diverged { iteration: usize, cause: Box<Error>, trace: Box<GampTrace> },

    #[error("state evolution broke down at layer {layer}, iteration {iteration}: {reason}")]
    SeBreakdown { layer: usize, iteration: usize, reason: String },

    #[error("brute-force posterior over {states} states exceeds the enumeration limit")]
    EnumerationTooLarge { states: u64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

fn join(v: &[SpecViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
