//! Sufficient condition for the optimality of the threshold-1 policy.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{System, Variant};
use crate::threshold::{expected_aoii, Threshold};

/// Relative slack in the comparison. Models where every update is discarded
/// make both sides equal to `1/(2p)` exactly, up to rounding.
const SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition1Report {
    pub sigma: f64,
    pub delta_bar_0: f64,
    pub delta_bar_1: f64,
    /// `(1 + (1 - p) σ) / 2`.
    pub bound: f64,
    pub holds: bool,
}

/// Constant `V(Δ + 1) - V(Δ)`, `Δ >= 1`, of the threshold-1 policy.
pub fn sigma(sys: &System) -> f64 {
    let p = sys.p();
    let d = sys.delay();
    let mut num = 0.0;
    let mut stay = 0.0;
    for t in 1..=sys.t_max() {
        num += d.p_t(t) * (1.0 - sys.keep(t)) / p;
        stay += p * d.p_t(t) * sys.keep(t - 1);
    }
    if sys.variant() == Variant::DiscardAfterTmax {
        let keep = sys.keep(sys.t_max());
        num += d.p_tail() * (1.0 - keep) / p;
        stay += d.p_tail() * keep;
    }
    num / (1.0 - stay)
}

/// Checks `Δ̄_1 <= min{Δ̄_0, (1 + (1 - p) σ) / 2}`.
pub fn check_condition1(sys: &System) -> Result<Condition1Report> {
    let sigma = sigma(sys);
    let delta_bar_0 = expected_aoii(sys, Threshold::Finite(0))?.expected_aoii;
    let delta_bar_1 = expected_aoii(sys, Threshold::Finite(1))?.expected_aoii;
    let bound = (1.0 + (1.0 - sys.p()) * sigma) / 2.0;
    let limit = delta_bar_0.min(bound);
    Ok(Condition1Report {
        sigma,
        delta_bar_0,
        delta_bar_1,
        bound,
        holds: delta_bar_1 <= limit * (1.0 + SLACK),
    })
}
