//! Age of Incorrect Information (AoII) of a binary Markov source observed
//! over a channel with random transmission delay.
//!
//! The crate computes the exact expected AoII of threshold transmission
//! policies, solves a truncated average-cost MDP to find the optimal policy,
//! and cross-checks both with a slot-level Monte Carlo simulator.

pub mod cost;
pub mod error;
pub mod experiment;
pub mod kernel;
mod linalg;
pub mod mdp;
pub mod model;
pub mod simulator;
pub mod threshold;

pub use error::{AoiiError, Result};
pub use kernel::Action;
pub use model::{Channel, DelayModel, SourceModel, System, SystemState, Variant};
pub use threshold::{expected_aoii, EvaluationReport, StationarySolution, Threshold};
