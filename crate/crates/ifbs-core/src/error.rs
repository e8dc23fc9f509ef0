//! Crate-wide error type.

use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("action index {action} out of range: model has {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },

    #[error("state index {state} out of range: model has {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("belief has {got} entries, expected {expected}")]
    BeliefLength { expected: usize, got: usize },

    #[error("belief entry {index} is negative ({value})")]
    NegativeBeliefEntry { index: usize, value: f64 },

    #[error("belief entries sum to {sum}, expected 1")]
    BeliefSum { sum: f64 },

    #[error("observation likelihood is incompatible with the prior: total probability {alpha:.3e}")]
    ZeroProbabilityObservation { alpha: f64 },

    #[error("likelihood has {got} entries, expected {expected}, or an entry outside [0, 1]")]
    InvalidLikelihood { expected: usize, got: usize },

    #[error("KL divergence is infinite: p has mass {mass:.3e} at state {state} where q vanishes")]
    DivergenceUndefined { state: usize, mass: f64 },

    #[error("grid spacing {spacing} is not the reciprocal of a positive integer")]
    BadSpacing { spacing: f64 },

    #[error("posterior set is missing the simplex vertex for state {state}")]
    MissingVertex { state: usize },

    #[error("spacings must be nested and decreasing: {coarse} then {fine}")]
    NonNestedSpacings { coarse: f64, fine: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid gridworld config: {0}")]
    InvalidConfig(String),

    #[error("no posterior is supported inside the prior's support {support:?}")]
    EmptyAdmissibleSet { support: Vec<usize> },

    #[error("prior LP {prior_index:?} finished with status {status:?}")]
    LpFailed {
        prior_index: Option<usize>,
        status: LpStatus,
    },

    #[error("initial state {state} has zero probability under the initial prior")]
    UnreachableInitialState { state: usize },

    #[error("sampled observation weights degenerate at step {step} (total {total:.3e})")]
    DegenerateObservationWeights { step: usize, total: f64 },

    #[error("value vectors have mismatched lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("solver tolerance {tol} must be positive and finite")]
    BadTolerance { tol: f64 },

    #[error("mixture weights sum to {sum}, expected 1")]
    AlphaSum { sum: f64 },

    #[error("trace inconsistent: {0}")]
    TraceInconsistent(String),

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
}
