use thiserror::Error;

/// Errors raised by the commutation, waveform, basis, plant and learning stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("drive profile never completes a step: accumulated angle {reached_rad} rad < 2π")]
    UnreachableStep { reached_rad: f64 },

    #[error("only {available} samples in the step, at least {required} needed")]
    InsufficientSamples { available: usize, required: usize },

    #[error("sampled basis is rank deficient: σ_min/σ_max = {ratio:e} below threshold {threshold:e}")]
    RankDeficient { ratio: f64, threshold: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(
        "shear derivatives differ by {mismatch:e} V at α = {alpha_rad} rad where both groups may engage"
    )]
    InconsistentDerivative { alpha_rad: f64, mismatch: f64 },

    #[error("{channel} exceeds ±{limit_v} V on α-intervals {intervals:?}")]
    Saturation {
        channel: &'static str,
        limit_v: f64,
        intervals: Vec<(f64, f64)>,
    },

    #[error("weighted Gram matrix is singular: {0}")]
    SingularGram(String),

    #[error("inadmissible weights: {0}")]
    InadmissibleWeights(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
