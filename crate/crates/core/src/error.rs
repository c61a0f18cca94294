use thiserror::Error;

/// Errors produced by model construction, analysis and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AoiiError {
    /// A parameter lies outside its admissible domain.
    #[error("invalid {name} = {value}: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: String,
    },

    /// A probability mass function that cannot be repaired by renormalization.
    #[error("invalid transmission-time distribution: {0}")]
    InvalidPmf(String),

    /// Transmit was requested from a state whose channel is busy.
    #[error("action Transmit is infeasible in busy state (delta={delta}, t={t})")]
    InfeasibleAction { delta: u64, t: usize },

    /// A state triplet that violates the idle-iff-t=0 rule or t < t_max.
    #[error("invalid system state (delta={delta}, t={t}): {reason}")]
    InvalidState {
        delta: u64,
        t: usize,
        reason: &'static str,
    },

    /// An operation defined for one channel variant was called on the other.
    #[error("operation requires the {expected} variant")]
    VariantMismatch { expected: &'static str },

    /// A linear system could not be solved.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (last span {span:e})")]
    NotConverged { iterations: usize, span: f64 },

    /// Policy iteration produced a larger average cost than its predecessor.
    #[error("policy iteration cost increased from {previous} to {next}")]
    NonMonotone { previous: f64, next: f64 },

    /// Experiment configuration problems.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AoiiError>;
