//! Average-cost MDP over the full state `(Δ, t, i)`, truncated at `Δ = m`.
//!
//! Successors with `Δ' = m + 1` are redirected to `Δ' = m`, so every row stays
//! stochastic. From level `Δ` the chain only moves to level `0` or level
//! `min(Δ + 1, m)`, which the solvers exploit.

mod condition;
mod solve;

use serde::{Deserialize, Serialize};

pub use condition::{check_condition1, sigma, Condition1Report};
pub use solve::{
    compact_bellman_residual, policy_evaluation, policy_evaluation_dense, policy_improvement,
    policy_iteration, rvi, PolicyValue, SolveResult, TIE_TOL,
};

use crate::error::{AoiiError, Result};
use crate::kernel::{step_kernel, Action, KernelQuery};
use crate::model::{Channel, System, SystemState};
use crate::threshold::Threshold;

/// Truncated model `M^(m)`.
#[derive(Debug, Clone)]
pub struct TruncatedMdp {
    m: u64,
    t_max: usize,
    states: Vec<SystemState>,
    /// `first_row[s]..first_row[s + 1]` are the rows of state `s`: idle states
    /// own an `Idle` and a `Transmit` row, busy states a single row.
    first_row: Vec<usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TruncatedMdp {
    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// States per `Δ` level: one idle state and two per busy `t`.
    pub fn level_width(&self) -> usize {
        2 * self.t_max - 1
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> SystemState {
        self.states[index]
    }

    pub fn index_of(&self, s: SystemState) -> Option<usize> {
        if s.delta > self.m || s.t >= self.t_max || s.is_idle() != (s.t == 0) {
            return None;
        }
        let offset = match s.channel {
            Channel::Idle => 0,
            Channel::BusySame => 1 + (s.t - 1) * 2,
            Channel::BusyDiff => 2 + (s.t - 1) * 2,
        };
        Some(s.delta as usize * self.level_width() + offset)
    }

    pub fn idle_index(&self, delta: u64) -> usize {
        delta as usize * self.level_width()
    }

    /// `(0, 0, -1)`.
    pub fn reference_index(&self) -> usize {
        0
    }

    pub fn cost(&self, index: usize) -> f64 {
        self.states[index].delta as f64
    }

    /// Successors of `(state, action)`. `None` for `Transmit` at a busy state.
    pub fn row(&self, index: usize, action: Action) -> Option<&[(usize, f64)]> {
        let start = self.first_row[index];
        let count = self.first_row[index + 1] - start;
        match (action, count) {
            (Action::Idle, _) => Some(&self.rows[start]),
            (Action::Transmit, 2) => Some(&self.rows[start + 1]),
            _ => None,
        }
    }

    /// Row followed under `policy` (busy states have no choice).
    pub fn policy_row(&self, index: usize, policy: &TabularPolicy) -> &[(usize, f64)] {
        let s = self.states[index];
        let action = if s.is_idle() {
            policy.action(s.delta)
        } else {
            Action::Idle
        };
        self.row(index, action).expect("idle states own both rows")
    }

    /// Largest `|row sum - 1|`.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Values at the idle states, indexed by `Δ`.
    pub fn idle_values(&self, value: &[f64]) -> Vec<f64> {
        (0..=self.m).map(|d| value[self.idle_index(d)]).collect()
    }
}

/// Builds `M^(m)`; requires `m >= 2 t_max`.
pub fn build_truncated(sys: &System, m: u64) -> Result<TruncatedMdp> {
    let t_max = sys.t_max();
    if m < 2 * t_max as u64 {
        return Err(AoiiError::Domain {
            name: "m",
            value: m as f64,
            reason: format!("truncation bound must be at least 2*t_max = {}", 2 * t_max),
        });
    }
    let mut states = Vec::with_capacity((m as usize + 1) * (2 * t_max - 1));
    for delta in 0..=m {
        states.push(SystemState::idle(delta));
        for t in 1..t_max {
            states.push(SystemState::new(delta, t, Channel::BusySame)?);
            states.push(SystemState::new(delta, t, Channel::BusyDiff)?);
        }
    }
    let mut mdp = TruncatedMdp {
        m,
        t_max,
        states,
        first_row: Vec::new(),
        rows: Vec::new(),
    };
    let mut first_row = Vec::with_capacity(mdp.states.len() + 1);
    let mut rows = Vec::new();
    for &s in &mdp.states {
        first_row.push(rows.len());
        let actions: &[Action] = if s.is_idle() {
            &Action::ALL
        } else {
            &[Action::Idle]
        };
        for &a in actions {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for (next, prob) in step_kernel(sys, KernelQuery::new(s, a)?)? {
                let next = SystemState {
                    delta: next.delta.min(m),
                    ..next
                };
                let j = mdp.index_of(next).expect("successor within the truncated space");
                match row.iter_mut().find(|(k, _)| *k == j) {
                    Some(entry) => entry.1 += prob,
                    None => row.push((j, prob)),
                }
            }
            row.sort_by_key(|(j, _)| *j);
            rows.push(row);
        }
    }
    first_row.push(rows.len());
    mdp.first_row = first_row;
    mdp.rows = rows;
    Ok(mdp)
}

/// Deterministic stationary policy over the idle states `Δ = 0..=m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularPolicy {
    actions: Vec<Action>,
}

impl TabularPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn threshold(tau: Threshold, m: u64) -> Self {
        Self {
            actions: (0..=m).map(|d| tau.action(d)).collect(),
        }
    }

    pub fn action(&self, delta: u64) -> Action {
        self.actions[delta as usize]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// The threshold this policy coincides with on `Δ <= up_to`, if any.
    pub fn as_threshold(&self, up_to: u64) -> Option<Threshold> {
        let window = &self.actions[..=(up_to as usize).min(self.actions.len() - 1)];
        match window.iter().position(|&a| a == Action::Transmit) {
            None => Some(Threshold::Infinite),
            Some(tau) => window[tau..]
                .iter()
                .all(|&a| a == Action::Transmit)
                .then_some(Threshold::Finite(tau as u64)),
        }
    }

    /// `"threshold τ=<τ>"` or `"non-threshold"`.
    pub fn summary(&self, up_to: u64) -> String {
        match self.as_threshold(up_to) {
            Some(tau) => format!("threshold τ={tau}"),
            None => "non-threshold".to_string(),
        }
    }
}
