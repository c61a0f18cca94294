//! Exact expected AoII of threshold policies.
//!
//! Under threshold `τ` the transmitter starts a transmission at an idle slot
//! iff the current AoII is at least `τ`. The idle-state occupancies
//! `π_Δ` (fraction of slots spent in `(Δ, 0, -1)`) are obtained on
//! `0 <= Δ < ω = t_max + τ + 1`; everything beyond `ω - 1` is carried by the
//! tail mass `Π` and the tail cost `Σ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cost::{cost_shift, EpochCostTable};
use crate::error::{AoiiError, Result};
use crate::kernel::{epoch_prob, epoch_prob_tx_discard, epoch_prob_tx_given_t, Action};
use crate::linalg::solve_dense;
use crate::model::{System, Variant};

/// Transmit at idle slots iff `Δ >= τ`; `Infinite` never transmits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Threshold {
    Finite(u64),
    Infinite,
}

impl Threshold {
    pub fn transmits_at(&self, delta: u64) -> bool {
        match self {
            Threshold::Finite(tau) => delta >= *tau,
            Threshold::Infinite => false,
        }
    }

    pub fn action(&self, delta: u64) -> Action {
        if self.transmits_at(delta) {
            Action::Transmit
        } else {
            Action::Idle
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(t) => write!(f, "{t}"),
            Threshold::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Threshold {
    type Err = AoiiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Threshold::Infinite),
            other => other
                .parse::<u64>()
                .map(Threshold::Finite)
                .map_err(|_| AoiiError::Config(format!("invalid threshold '{other}'"))),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Finite(t) => s.serialize_u64(*t),
            Threshold::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(t) => Ok(Threshold::Finite(t)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Idle-state occupancies of a finite threshold policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySolution {
    pub tau: u64,
    /// `π_Δ` for `0 <= Δ < ω`.
    pub pi: Vec<f64>,
    /// `Π = Σ_{Δ >= ω} π_Δ`.
    pub tail_pi: f64,
    /// `Σ = Σ_{Δ >= ω} C(Δ, 1) π_Δ`.
    pub tail_cost: f64,
    /// Max-norm residual over every balance equation, including any equation
    /// dropped to square the system.
    pub residual: f64,
    /// `|Σ_{Δ<τ} π_Δ + ET Σ_{Δ>=τ} π_Δ - 1|`.
    pub normalization_error: f64,
}

impl StationarySolution {
    /// `ω = t_max + τ + 1`.
    pub fn omega(&self) -> usize {
        self.pi.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationCheck {
    pub seed: u64,
    pub slots: u64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tau: Threshold,
    pub expected_aoii: f64,
    /// Absent for `τ = ∞`.
    pub stationary: Option<StationarySolution>,
    pub simulation: Option<SimulationCheck>,
}

fn tx(sys: &System, from: u64, to: u64) -> f64 {
    epoch_prob(sys, from, to, Action::Transmit)
}

fn normalization_error(sys: &System, tau: u64, pi: &[f64], tail: f64) -> f64 {
    let et = sys.expected_transmission_time();
    let tau = tau as usize;
    let idle: f64 = pi[..tau.min(pi.len())].iter().sum();
    let busy: f64 = pi[tau.min(pi.len())..].iter().sum::<f64>() + tail;
    (idle + et * busy - 1.0).abs()
}

/// Coefficients of the finite balance system for `0 < τ < ∞`.
///
/// Row `Δ < ω` encodes `π_Δ - (inflow) = 0`; row `ω` is the tail-mass
/// equation; row `ω + 1` the normalization. Columns are `π_0..π_{ω-1}, Π`.
fn balance_system(sys: &System, tau: u64) -> (DMatrix<f64>, DVector<f64>) {
    let p = sys.p();
    let t_max = sys.t_max();
    let tau_u = tau as usize;
    let omega = t_max + tau_u + 1;
    let n = omega + 1;
    let mut a = DMatrix::<f64>::zeros(omega + 2, n);
    let mut b = DVector::<f64>::zeros(omega + 2);

    // inflow from every transmitting state i >= from (including the tail)
    let transmitting = |a: &mut DMatrix<f64>, row: usize, from: usize, coef: f64| {
        for i in from..omega {
            a[(row, i)] -= coef;
        }
        a[(row, omega)] -= coef;
    };

    // Δ = 0
    a[(0, 0)] += p;
    for i in 1..tau_u {
        a[(0, i)] -= p;
    }
    transmitting(&mut a, 0, tau_u, tx(sys, 1, 0));

    // Δ = 1
    a[(1, 1)] += 1.0;
    a[(1, 0)] -= p;
    transmitting(&mut a, 1, tau_u, tx(sys, 1, 1));

    for delta in 2..omega {
        let d = delta as u64;
        a[(delta, delta)] += 1.0;
        if delta - 1 < tau_u {
            a[(delta, delta - 1)] -= 1.0 - p;
            if delta < t_max {
                transmitting(&mut a, delta, tau_u, tx(sys, tau, d));
            }
        } else {
            for i in tau_u..delta {
                a[(delta, i)] -= tx(sys, i as u64, d);
            }
            if delta < t_max {
                transmitting(&mut a, delta, delta, tx(sys, d, d));
            }
        }
    }

    // tail mass
    let w = omega as u64;
    let stay_in_tail: f64 = (1..=t_max as u64).map(|i| tx(sys, w, w + i)).sum();
    a[(omega, omega)] += 1.0 - stay_in_tail;
    for i in tau_u + 1..omega {
        let into_tail: f64 = (tau + 1..=i as u64)
            .map(|k| tx(sys, i as u64, t_max as u64 + k))
            .sum();
        a[(omega, i)] -= into_tail;
    }

    // normalization
    let et = sys.expected_transmission_time();
    for i in 0..n {
        a[(omega + 1, i)] = if i < tau_u { 1.0 } else { et };
    }
    b[omega + 1] = 1.0;
    (a, b)
}

/// Solves the `(ω + 1)`-dimensional balance system for `0 < τ < ∞`.
///
/// The `Δ = 0` balance row is linearly dependent on the others; it is left
/// out of the solve and reported through the residual.
pub fn stationary_general(sys: &System, tau: u64) -> Result<StationarySolution> {
    if tau == 0 {
        return Err(AoiiError::Domain {
            name: "tau",
            value: 0.0,
            reason: "the general balance system covers 0 < tau < inf; use stationary_tau0".into(),
        });
    }
    let (full, rhs) = balance_system(sys, tau);
    let n = full.ncols();
    let square = full.rows(1, n).into_owned();
    let square_rhs = rhs.rows(1, n).into_owned();
    let (x, _) = solve_dense(&square, &square_rhs)?;
    let residual = (&full * &x - &rhs).amax();
    let omega = n - 1;
    let pi: Vec<f64> = x.iter().take(omega).copied().collect();
    let tail_pi = x[omega];
    finish(sys, tau, pi, tail_pi, residual)
}

/// Closed-form occupancies for `τ = 0`.
pub fn stationary_tau0(sys: &System) -> Result<StationarySolution> {
    let t_max = sys.t_max();
    let et = sys.expected_transmission_time();
    let p10 = tx(sys, 1, 0);
    let p00 = tx(sys, 0, 0);
    let mut pi = Vec::with_capacity(t_max + 1);
    pi.push(p10 / (et * (1.0 - p00 + p10)));
    for delta in 1..=t_max {
        let d = delta as u64;
        let inflow: f64 = (0..delta).map(|i| tx(sys, i as u64, d) * pi[i]).sum();
        let below: f64 = pi.iter().sum();
        pi.push(inflow + tx(sys, d, d) * (1.0 / et - below));
    }
    let tm = t_max as u64;
    let num: f64 = (1..=t_max)
        .map(|i| {
            let out: f64 = (1..=i as u64).map(|k| tx(sys, i as u64, tm + k)).sum();
            out * pi[i]
        })
        .sum();
    let stay: f64 = (1..=tm).map(|i| tx(sys, tm + 1, tm + 1 + i)).sum();
    let tail_pi = num / (1.0 - stay);
    finish(sys, 0, pi, tail_pi, 0.0)
}

/// Closed-form occupancies for `τ = 1`.
pub fn stationary_tau1(sys: &System) -> Result<StationarySolution> {
    let p = sys.p();
    let t_max = sys.t_max();
    let et = sys.expected_transmission_time();
    let p10 = tx(sys, 1, 0);
    let p11 = tx(sys, 1, 1);
    let denom = p * et + p10;
    let mut pi = vec![p10 / denom, p * (p10 + p11) / denom];
    for delta in 2..=t_max + 1 {
        let d = delta as u64;
        let inflow: f64 = (1..delta).map(|i| tx(sys, i as u64, d) * pi[i]).sum();
        let below: f64 = pi[1..].iter().sum();
        pi.push(inflow + tx(sys, d, d) * ((1.0 - pi[0]) / et - below));
    }
    let tm = t_max as u64;
    let num: f64 = (2..=t_max + 1)
        .map(|i| {
            let out: f64 = (2..=i as u64).map(|k| tx(sys, i as u64, tm + k)).sum();
            out * pi[i]
        })
        .sum();
    let stay: f64 = (1..=tm).map(|i| tx(sys, tm + 2, tm + 2 + i)).sum();
    let tail_pi = num / (1.0 - stay);
    // The closed form comes from the same balance system, so its residual
    // is measured against it.
    let (a, b) = balance_system(sys, 1);
    let mut x = DVector::from_vec(pi.clone());
    x = x.push(tail_pi);
    let residual = (&a * &x - &b).amax();
    finish(sys, 1, pi, tail_pi, residual)
}

fn finish(
    sys: &System,
    tau: u64,
    pi: Vec<f64>,
    tail_pi: f64,
    residual: f64,
) -> Result<StationarySolution> {
    if pi.iter().chain(std::iter::once(&tail_pi)).any(|v| !v.is_finite()) {
        return Err(AoiiError::Singular(format!(
            "non-finite stationary solution for tau={tau}"
        )));
    }
    let costs = EpochCostTable::new(sys);
    let tail_cost = sigma(sys, &costs, tau, &pi, tail_pi);
    let normalization_error = normalization_error(sys, tau, &pi, tail_pi);
    Ok(StationarySolution {
        tau,
        pi,
        tail_pi,
        tail_cost,
        residual,
        normalization_error,
    })
}

/// Weight of a `t`-slot jump `Δ - t -> Δ` in the tail region.
fn jump_weight(sys: &System, to: u64, t: usize) -> f64 {
    let d = sys.delay();
    let from = to - t as u64;
    let mut w = d.p_t(t) * epoch_prob_tx_given_t(sys, from, to, t);
    if sys.variant() == Variant::DiscardAfterTmax && t == sys.t_max() {
        w += d.p_tail() * epoch_prob_tx_discard(sys, from, to).unwrap_or(0.0);
    }
    w
}

/// Tail cost `Σ` from the occupancies on `Δ < ω` and the tail mass.
pub fn tail_cost_sigma(sys: &System, sol: &StationarySolution) -> f64 {
    sigma(
        sys,
        &EpochCostTable::new(sys),
        sol.tau,
        &sol.pi,
        sol.tail_pi,
    )
}

fn sigma(sys: &System, costs: &EpochCostTable, tau: u64, pi: &[f64], tail_pi: f64) -> f64 {
    let t_max = sys.t_max();
    let omega = t_max + tau as usize + 1;
    debug_assert_eq!(pi.len(), omega);
    let mut num = 0.0;
    let mut stay = 0.0;
    for t in 1..=t_max {
        let mut carried_cost = 0.0;
        let mut carried_mass = 0.0;
        for i in omega - t..omega {
            let w = jump_weight(sys, (i + t) as u64, t);
            carried_cost += w * costs.aggregate(i as u64, Action::Transmit) * pi[i];
            carried_mass += w * pi[i];
        }
        let w_tail = jump_weight(sys, (omega + t) as u64, t);
        let mass_t = carried_mass + w_tail * tail_pi;
        num += carried_cost + cost_shift(sys, t) * mass_t;
        stay += w_tail;
    }
    num / (1.0 - stay)
}

fn expected_from(sys: &System, sol: &StationarySolution) -> f64 {
    let costs = EpochCostTable::new(sys);
    let tau = sol.tau;
    let body: f64 = sol
        .pi
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            let action = if (i as u64) < tau {
                Action::Idle
            } else {
                Action::Transmit
            };
            costs.aggregate(i as u64, action) * pi
        })
        .sum();
    body + sol.tail_cost
}

/// Exact expected AoII of threshold `τ`.
pub fn expected_aoii(sys: &System, tau: Threshold) -> Result<EvaluationReport> {
    let stationary = match tau {
        Threshold::Infinite => {
            return Ok(EvaluationReport {
                tau,
                expected_aoii: 1.0 / (2.0 * sys.p()),
                stationary: None,
                simulation: None,
            })
        }
        Threshold::Finite(0) => stationary_tau0(sys)?,
        Threshold::Finite(1) => stationary_tau1(sys)?,
        Threshold::Finite(t) => stationary_general(sys, t)?,
    };
    Ok(EvaluationReport {
        tau,
        expected_aoii: expected_from(sys, &stationary),
        stationary: Some(stationary),
        simulation: None,
    })
}
