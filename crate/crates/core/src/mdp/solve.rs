//! Relative value iteration, policy evaluation and policy iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{TabularPolicy, TruncatedMdp};
use crate::cost::EpochCostTable;
use crate::error::{AoiiError, Result};
use crate::kernel::{epoch_row, Action};
use crate::linalg::solve_dense;
use crate::model::System;

/// Relative margin by which transmitting must beat idling to be chosen.
pub const TIE_TOL: f64 = 1e-10;

/// Slack allowed when asserting that policy iteration never increases θ.
const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub policy: TabularPolicy,
    /// Average cost. Span midpoint for value iteration, exact for policy
    /// iteration.
    pub theta: f64,
    /// `Q(s_ref)` at the final value-iteration sweep.
    pub theta_reference: f64,
    /// Width of the final one-step span `max(TV - V) - min(TV - V)`.
    pub theta_span: f64,
    /// Relative values indexed like [`TruncatedMdp::states`], pinned to 0 at
    /// `(0, 0, -1)`.
    pub value: Vec<f64>,
    pub iterations: usize,
    /// Final sup-norm update for value iteration; Poisson-equation residual
    /// for policy iteration.
    pub residual: f64,
    /// θ of every evaluated policy (policy iteration only).
    pub theta_history: Vec<f64>,
}

/// Solution of the Poisson equation for a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub value: Vec<f64>,
    pub theta: f64,
    /// `max_s |V(s) + θ - C(s) - Σ P V|`.
    pub residual: f64,
}

fn poisson_residual(mdp: &TruncatedMdp, policy: &TabularPolicy, value: &[f64], theta: f64) -> f64 {
    (0..mdp.num_states())
        .map(|s| {
            let next: f64 = mdp.policy_row(s, policy).iter().map(|&(j, p)| p * value[j]).sum();
            (value[s] + theta - mdp.cost(s) - next).abs()
        })
        .fold(0.0, f64::max)
}

/// Exact evaluation of `policy` by eliminating `Δ` levels from the top.
///
/// Each level `Δ` only feeds level `0` and level `min(Δ + 1, m)`, so
/// `V_Δ = X_Δ V_0 + y_Δ + z_Δ θ` can be propagated downwards, leaving a
/// `(2 t_max)`-dimensional system for `V_0` and `θ`.
pub fn policy_evaluation(mdp: &TruncatedMdp, policy: &TabularPolicy) -> Result<PolicyValue> {
    let l = mdp.level_width();
    let m = mdp.m() as usize;
    let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(m + 1);
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
    let mut zs: Vec<DVector<f64>> = Vec::with_capacity(m + 1);

    for level in (0..=m).rev() {
        let mut to_zero = DMatrix::<f64>::zeros(l, l);
        let mut to_next = DMatrix::<f64>::zeros(l, l);
        for k in 0..l {
            for &(j, p) in mdp.policy_row(level * l + k, policy) {
                if j < l {
                    to_zero[(k, j)] += p;
                } else {
                    to_next[(k, j % l)] += p;
                }
            }
        }
        let c = DVector::from_element(l, level as f64);
        let minus_one = DVector::from_element(l, -1.0);
        if level == m {
            let lu = (DMatrix::identity(l, l) - to_next).lu();
            let singular = || AoiiError::Singular(format!("top level of m={m}"));
            xs.push(lu.solve(&to_zero).ok_or_else(singular)?);
            ys.push(lu.solve(&c).ok_or_else(singular)?);
            zs.push(lu.solve(&minus_one).ok_or_else(singular)?);
        } else {
            let (x, y, z) = (xs.last().unwrap(), ys.last().unwrap(), zs.last().unwrap());
            let nx = to_zero + &to_next * x;
            let ny = c + &to_next * y;
            let nz = minus_one + &to_next * z;
            xs.push(nx);
            ys.push(ny);
            zs.push(nz);
        }
    }
    xs.reverse();
    ys.reverse();
    zs.reverse();

    let mut a = DMatrix::<f64>::zeros(l + 1, l + 1);
    let mut b = DVector::<f64>::zeros(l + 1);
    a.view_mut((0, 0), (l, l))
        .copy_from(&(DMatrix::identity(l, l) - &xs[0]));
    a.view_mut((0, l), (l, 1)).copy_from(&(-&zs[0]));
    b.rows_mut(0, l).copy_from(&ys[0]);
    a[(l, mdp.reference_index())] = 1.0;
    let (u, _) = solve_dense(&a, &b)?;
    let v0 = u.rows(0, l).into_owned();
    let theta = u[l];

    let mut value = Vec::with_capacity(mdp.num_states());
    for level in 0..=m {
        let v = &xs[level] * &v0 + &ys[level] + &zs[level] * theta;
        value.extend(v.iter());
    }
    value[mdp.reference_index()] = 0.0;
    let residual = poisson_residual(mdp, policy, &value, theta);
    Ok(PolicyValue {
        value,
        theta,
        residual,
    })
}

/// Evaluation through one dense `(N + 1)`-dimensional solve. Intended for
/// small models and cross-checks.
pub fn policy_evaluation_dense(mdp: &TruncatedMdp, policy: &TabularPolicy) -> Result<PolicyValue> {
    let n = mdp.num_states();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        a[(s, s)] += 1.0;
        a[(s, n)] = 1.0;
        for &(j, p) in mdp.policy_row(s, policy) {
            a[(s, j)] -= p;
        }
        b[s] = mdp.cost(s);
    }
    a[(n, mdp.reference_index())] = 1.0;
    let (x, _) = solve_dense(&a, &b)?;
    let value: Vec<f64> = x.iter().take(n).copied().collect();
    let theta = x[n];
    let residual = poisson_residual(mdp, policy, &value, theta);
    Ok(PolicyValue {
        value,
        theta,
        residual,
    })
}

fn q_value(mdp: &TruncatedMdp, value: &[f64], s: usize, action: Action) -> Option<f64> {
    mdp.row(s, action)
        .map(|row| mdp.cost(s) + row.iter().map(|&(j, p)| p * value[j]).sum::<f64>())
}

fn prefers_transmit(q_idle: f64, q_tx: f64) -> bool {
    q_tx < q_idle - TIE_TOL * q_idle.abs().max(1.0)
}

/// Greedy policy with respect to `value`; ties go to idling.
pub fn policy_improvement(mdp: &TruncatedMdp, value: &[f64]) -> TabularPolicy {
    let actions = (0..=mdp.m())
        .map(|d| {
            let s = mdp.idle_index(d);
            let q_idle = q_value(mdp, value, s, Action::Idle).unwrap();
            let q_tx = q_value(mdp, value, s, Action::Transmit).unwrap();
            if prefers_transmit(q_idle, q_tx) {
                Action::Transmit
            } else {
                Action::Idle
            }
        })
        .collect();
    TabularPolicy::new(actions)
}

/// Relative value iteration with reference state `(0, 0, -1)`.
///
/// Stops once `max_s |V_ν(s) - V_{ν-1}(s)| <= epsilon`.
pub fn rvi(mdp: &TruncatedMdp, epsilon: f64, max_iter: usize) -> Result<SolveResult> {
    if !(epsilon > 0.0) {
        return Err(AoiiError::Domain {
            name: "epsilon",
            value: epsilon,
            reason: "must be > 0".into(),
        });
    }
    let n = mdp.num_states();
    let reference = mdp.reference_index();
    let mut value = vec![0.0; n];
    let mut updated = vec![0.0; n];
    let mut span = (f64::INFINITY, f64::NEG_INFINITY);
    for iteration in 1..=max_iter {
        for (s, out) in updated.iter_mut().enumerate() {
            let q_idle = q_value(mdp, &value, s, Action::Idle).unwrap();
            *out = match q_value(mdp, &value, s, Action::Transmit) {
                Some(q_tx) => q_idle.min(q_tx),
                None => q_idle,
            };
        }
        let theta_reference = updated[reference];
        span = (f64::INFINITY, f64::NEG_INFINITY);
        let mut change: f64 = 0.0;
        for s in 0..n {
            let gain = updated[s] - value[s];
            span = (span.0.min(gain), span.1.max(gain));
            let next = updated[s] - theta_reference;
            change = change.max((next - value[s]).abs());
            value[s] = next;
        }
        if change <= epsilon {
            return Ok(SolveResult {
                policy: policy_improvement(mdp, &value),
                theta: 0.5 * (span.0 + span.1),
                theta_reference,
                theta_span: span.1 - span.0,
                value,
                iterations: iteration,
                residual: change,
                theta_history: Vec::new(),
            });
        }
    }
    Err(AoiiError::NotConverged {
        iterations: max_iter,
        span: span.1 - span.0,
    })
}

/// Policy iteration from `initial` until the policy repeats.
///
/// Fails with [`AoiiError::NonMonotone`] if an improvement step raises θ.
pub fn policy_iteration(
    mdp: &TruncatedMdp,
    initial: TabularPolicy,
    max_iter: usize,
) -> Result<SolveResult> {
    let mut policy = initial;
    let mut history: Vec<f64> = Vec::new();
    for iteration in 1..=max_iter {
        let eval = policy_evaluation(mdp, &policy)?;
        if let Some(&previous) = history.last() {
            if eval.theta > previous + MONOTONE_TOL * previous.abs().max(1.0) {
                return Err(AoiiError::NonMonotone {
                    previous,
                    next: eval.theta,
                });
            }
        }
        history.push(eval.theta);
        let next = policy_improvement(mdp, &eval.value);
        if next == policy {
            return Ok(SolveResult {
                policy,
                theta: eval.theta,
                theta_reference: eval.theta,
                theta_span: 0.0,
                value: eval.value,
                iterations: iteration,
                residual: eval.residual,
                theta_history: history,
            });
        }
        policy = next;
    }
    Err(AoiiError::NotConverged {
        iterations: max_iter,
        span: f64::NAN,
    })
}

/// Max residual of the idle-state Bellman equation
/// `V(Δ) + θ = min_a { C(Δ, a) - θ(a) + Σ P_{Δ,Δ'}(a) V(Δ') }`,
/// `θ(0) = 0`, `θ(1) = (ET - 1) θ`, over `Δ <= m - t_max`.
pub fn compact_bellman_residual(sys: &System, mdp: &TruncatedMdp, solve: &SolveResult) -> f64 {
    let v = mdp.idle_values(&solve.value);
    let theta = solve.theta;
    let costs = EpochCostTable::new(sys);
    let extra = (sys.expected_transmission_time() - 1.0) * theta;
    let top = mdp.m() - mdp.t_max() as u64;
    (0..=top)
        .map(|d| {
            let q = |a: Action| {
                let row = epoch_row(sys, d, a);
                let next: f64 = row.entries.iter().map(|(&to, &p)| p * v[to as usize]).sum();
                let shift = if a == Action::Transmit { extra } else { 0.0 };
                costs.aggregate(d, a) - shift + next
            };
            let rhs = q(Action::Idle).min(q(Action::Transmit));
            (v[d as usize] + theta - rhs).abs()
        })
        .fold(0.0, f64::max)
}
