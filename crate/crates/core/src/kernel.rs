//! Transition probabilities.
//!
//! Two levels are provided. [`step_kernel`] is the single-slot kernel of the
//! full state `(Δ, t, i)`. The `epoch_*` functions give the decision-epoch
//! kernel between idle states `(Δ, 0, -1)`: one slot when idling, the whole
//! transmission when transmitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AoiiError, Result};
use crate::model::{Channel, System, SystemState, Variant};

/// Transmitter decision at an idle slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Idle,
    Transmit,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Idle, Action::Transmit];

    pub fn code(&self) -> u8 {
        match self {
            Action::Idle => 0,
            Action::Transmit => 1,
        }
    }
}

/// A `(state, action)` pair for the single-slot kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelQuery {
    pub from: SystemState,
    pub action: Action,
}

impl KernelQuery {
    /// Rejects `Transmit` from a busy state.
    pub fn new(from: SystemState, action: Action) -> Result<Self> {
        if action == Action::Transmit && !from.is_idle() {
            return Err(AoiiError::InfeasibleAction {
                delta: from.delta,
                t: from.t,
            });
        }
        Ok(Self { from, action })
    }
}

/// Single-slot successor distribution, sorted by state.
pub fn step_kernel(sys: &System, q: KernelQuery) -> Result<Vec<(SystemState, f64)>> {
    let s = SystemState::new(q.from.delta, q.from.t, q.from.channel)?;
    let t_max = sys.t_max();
    if s.t >= t_max {
        return Err(AoiiError::InvalidState {
            delta: s.delta,
            t: s.t,
            reason: "elapsed transmission time must be below t_max",
        });
    }
    let q = KernelQuery::new(s, q.action)?;
    let p = sys.p();
    let wrong = s.delta > 0;
    let next_delta = |mismatch: bool| if mismatch { s.delta + 1 } else { 0 };

    let mut out: BTreeMap<SystemState, f64> = BTreeMap::new();
    let mut push = |state: SystemState, prob: f64| {
        if prob > 0.0 {
            *out.entry(state).or_insert(0.0) += prob;
        }
    };

    // (elapsed slots, does the update in flight differ from the estimate)
    let in_flight = match (s.channel, q.action) {
        (Channel::Idle, Action::Idle) => None,
        (Channel::Idle, Action::Transmit) => Some((0, wrong)),
        (Channel::BusySame, _) => Some((s.t, false)),
        (Channel::BusyDiff, _) => Some((s.t, true)),
    };

    for (flip, pf) in [(false, 1.0 - p), (true, p)] {
        let mismatch = wrong ^ flip;
        match in_flight {
            None => push(SystemState::idle(next_delta(mismatch)), pf),
            Some((elapsed, differs)) => {
                let cont = sys.delay().survival(elapsed);
                if elapsed + 1 < t_max {
                    let channel = if differs {
                        Channel::BusyDiff
                    } else {
                        Channel::BusySame
                    };
                    push(
                        SystemState {
                            delta: next_delta(mismatch),
                            t: elapsed + 1,
                            channel,
                        },
                        cont * pf,
                    );
                } else {
                    // Only reachable with positive mass under discard: the
                    // update is dropped and the estimate is left unchanged.
                    push(SystemState::idle(next_delta(mismatch)), cont * pf);
                }
                push(SystemState::idle(next_delta(mismatch ^ differs)), (1.0 - cont) * pf);
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// Epoch kernel under the idle action: one slot of source evolution.
pub fn epoch_prob_idle(sys: &System, from: u64, to: u64) -> f64 {
    let p = sys.p();
    match (from, to) {
        (0, 0) => 1.0 - p,
        (0, 1) => p,
        (_, 0) => p,
        (d, d2) if d > 0 && d2 == d + 1 => 1.0 - p,
        _ => 0.0,
    }
}

/// Transmit-epoch kernel conditioned on delivery after exactly `t` slots.
pub fn epoch_prob_tx_given_t(sys: &System, from: u64, to: u64, t: usize) -> f64 {
    debug_assert!(t >= 1 && t <= sys.t_max());
    let p = sys.p();
    if to == 0 {
        return sys.stay(t);
    }
    if from == 0 {
        let k = to as usize;
        return if to <= t as u64 {
            sys.stay(t - k) * p * sys.keep(k - 1)
        } else {
            0.0
        };
    }
    if to == from + t as u64 {
        return p * sys.keep(t - 1);
    }
    if to == 1 {
        return (1.0 - sys.stay(t - 1)) * (1.0 - p);
    }
    if to < t as u64 {
        let k = to as usize;
        return (1.0 - sys.stay(t - k)) * p * p * sys.keep(k - 2);
    }
    0.0
}

/// Transmit-epoch kernel conditioned on the update being dropped at `t_max`.
pub fn epoch_prob_tx_discard(sys: &System, from: u64, to: u64) -> Result<f64> {
    if sys.variant() != Variant::DiscardAfterTmax {
        return Err(AoiiError::VariantMismatch {
            expected: "discard",
        });
    }
    Ok(discard_prob(sys, from, to))
}

fn discard_prob(sys: &System, from: u64, to: u64) -> f64 {
    let t_max = sys.t_max();
    if from == 0 {
        return epoch_prob_tx_given_t(sys, 0, to, t_max);
    }
    let p = sys.p();
    if to == 0 {
        1.0 - sys.stay(t_max)
    } else if to == from + t_max as u64 {
        sys.keep(t_max)
    } else if to < t_max as u64 {
        let k = to as usize;
        (1.0 - sys.stay(t_max - k)) * p * sys.keep(k - 1)
    } else {
        0.0
    }
}

/// Epoch kernel `P_{Δ,Δ'}(a)` between idle states.
pub fn epoch_prob(sys: &System, from: u64, to: u64, action: Action) -> f64 {
    match action {
        Action::Idle => epoch_prob_idle(sys, from, to),
        Action::Transmit => {
            let d = sys.delay();
            let mut acc: f64 = (1..=sys.t_max())
                .filter(|&t| d.p_t(t) > 0.0)
                .map(|t| d.p_t(t) * epoch_prob_tx_given_t(sys, from, to, t))
                .sum();
            if sys.variant() == Variant::DiscardAfterTmax && d.p_tail() > 0.0 {
                acc += d.p_tail() * discard_prob(sys, from, to);
            }
            acc
        }
    }
}

/// One row of the epoch kernel with its finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTransitionRow {
    pub from_delta: u64,
    pub action: Action,
    /// Nonzero entries only.
    pub entries: BTreeMap<u64, f64>,
}

impl EpochTransitionRow {
    pub fn get(&self, to: u64) -> f64 {
        self.entries.get(&to).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

/// Full epoch row from idle state `Δ`.
pub fn epoch_row(sys: &System, from: u64, action: Action) -> EpochTransitionRow {
    let t_max = sys.t_max() as u64;
    let support = (0..t_max).chain(from.max(t_max - 1) + 1..=from + t_max);
    let entries = support
        .filter_map(|to| {
            let v = epoch_prob(sys, from, to, action);
            (v > 0.0).then_some((to, v))
        })
        .collect();
    EpochTransitionRow {
        from_delta: from,
        action,
        entries,
    }
}

/// Tolerance for the structural identities; they hold term by term.
pub const LEMMA_TOL: f64 = 1e-14;

/// First failing structural check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaViolation {
    /// 1: Δ-independence, 2: shift invariance, 3: zero region.
    pub property: u8,
    pub from: u64,
    pub to: u64,
    pub shift: u64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub checks: usize,
    pub violation: Option<LemmaViolation>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks the three structural properties of the transmit-epoch kernel for
/// `Δ <= 3 t_max`.
pub fn validate_lemma_properties(sys: &System) -> LemmaReport {
    validate_lemma_properties_with(sys, |from, to| epoch_prob(sys, from, to, Action::Transmit))
}

/// Same checks against an arbitrary transmit-epoch kernel.
pub fn validate_lemma_properties_with<F>(sys: &System, kernel: F) -> LemmaReport
where
    F: Fn(u64, u64) -> f64,
{
    let t_max = sys.t_max() as u64;
    let discard = sys.variant() == Variant::DiscardAfterTmax;
    let max_delta = 3 * t_max;
    let mut checks = 0;
    let differs = |a: f64, b: f64| (a - b).abs() > LEMMA_TOL;
    let report = |v: LemmaViolation, checks| LemmaReport {
        checks,
        violation: Some(v),
    };

    for from in 0..=max_delta {
        for to in 0..=from + t_max + 2 {
            let value = kernel(from, to);
            let fail = |property, shift, rhs| LemmaViolation {
                property,
                from,
                to,
                shift,
                lhs: value,
                rhs,
            };

            // property 3
            if to > from + t_max || (to > t_max - 1 && to < from + 1) {
                checks += 1;
                if value != 0.0 {
                    return report(fail(3, 0, 0.0), checks);
                }
            }

            // property 1
            let floor = if discard { to.max(1) } else { to };
            if to < t_max && from > floor {
                checks += 1;
                let reference = kernel(floor, to);
                if differs(value, reference) {
                    return report(fail(1, 0, reference), checks);
                }
            }

            // property 2, against entries already visited
            let lowest = u64::from(discard);
            for shift in 1..=t_max {
                if to < t_max + shift || from < lowest + shift {
                    break;
                }
                checks += 1;
                let shifted = kernel(from - shift, to - shift);
                if differs(value, shifted) {
                    return report(fail(2, shift, shifted), checks);
                }
            }
        }
    }
    LemmaReport {
        checks,
        violation: None,
    }
}
