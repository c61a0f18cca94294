//! Expected AoII accumulated over one decision epoch.
//!
//! `C^k(Δ)` is the expected AoII `k` slots into a transmission that started at
//! idle state `(Δ, 0, -1)` and is still in flight; `C^t(Δ, 1)` sums it over a
//! transmission lasting `t` slots (starting slot included), and `C(Δ, a)`
//! averages over the delay distribution.

use serde::{Deserialize, Serialize};

use crate::kernel::Action;
use crate::model::{SourceModel, System, Variant};

/// Expected AoII `k` slots after a transmission starts at `Δ`.
pub fn cost_ck(src: &SourceModel, delta: u64, k: usize) -> f64 {
    let p = src.p();
    let q = 1.0 - p;
    if delta == 0 {
        (1..=k)
            .map(|h| h as f64 * src.p_pow((k - h) as u64) * p * q.powi(h as i32 - 1))
            .sum()
    } else {
        let mixed: f64 = (1..k)
            .map(|h| h as f64 * (1.0 - src.p_pow((k - h) as u64)) * p * q.powi(h as i32 - 1))
            .sum();
        mixed + (delta + k as u64) as f64 * q.powi(k as i32)
    }
}

/// Expected AoII summed over a transmission of exactly `t` slots.
pub fn cost_tx_given_t(src: &SourceModel, delta: u64, t: usize) -> f64 {
    (0..t).map(|k| cost_ck(src, delta, k)).sum()
}

/// `C(Δ, a)`: `Δ` when idling, the delay-averaged transmission cost otherwise.
pub fn cost_epoch(sys: &System, delta: u64, action: Action) -> f64 {
    match action {
        Action::Idle => delta as f64,
        Action::Transmit => {
            let src = sys.source();
            let d = sys.delay();
            let mut acc: f64 = (1..=sys.t_max())
                .filter(|&t| d.p_t(t) > 0.0)
                .map(|t| d.p_t(t) * cost_tx_given_t(src, delta, t))
                .sum();
            if sys.variant() == Variant::DiscardAfterTmax && d.p_tail() > 0.0 {
                acc += d.p_tail() * cost_tx_given_t(src, delta, sys.t_max());
            }
            acc
        }
    }
}

/// `Δ'_t = C(Δ, 1) - C(Δ - t, 1)`, constant for `Δ > t`.
pub fn cost_shift(sys: &System, t: usize) -> f64 {
    let p = sys.p();
    let t = t as f64;
    let d = sys.delay();
    let growth = |i: usize| (t - t * sys.keep(i)) / p;
    let mut acc: f64 = (1..=sys.t_max()).map(|i| d.p_t(i) * growth(i)).sum();
    if sys.variant() == Variant::DiscardAfterTmax {
        acc += d.p_tail() * growth(sys.t_max());
    }
    acc
}

/// Transmission costs tabulated per model.
///
/// For `Δ > 0`, `C^t(Δ, 1)` is affine in `Δ`, so each `t` stores an intercept
/// and a slope and any `Δ` is served in O(1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochCostTable {
    /// `at_zero[t - 1] = C^t(0, 1)`.
    at_zero: Vec<f64>,
    /// `C^t(Δ, 1) = intercept[t - 1] + slope[t - 1] * Δ` for `Δ > 0`.
    intercept: Vec<f64>,
    slope: Vec<f64>,
    weights: Vec<f64>,
}

impl EpochCostTable {
    pub fn new(sys: &System) -> Self {
        let src = sys.source();
        let t_max = sys.t_max();
        let mut at_zero = Vec::with_capacity(t_max);
        let mut intercept = Vec::with_capacity(t_max);
        let mut slope = Vec::with_capacity(t_max);
        let (mut z, mut one, mut s) = (0.0, 0.0, 0.0);
        for k in 0..t_max {
            z += cost_ck(src, 0, k);
            one += cost_ck(src, 1, k);
            s += sys.keep(k);
            at_zero.push(z);
            slope.push(s);
            intercept.push(one - s);
        }
        let d = sys.delay();
        let mut weights: Vec<f64> = d.pmf().to_vec();
        if sys.variant() == Variant::DiscardAfterTmax {
            weights[t_max - 1] += d.p_tail();
        }
        Self {
            at_zero,
            intercept,
            slope,
            weights,
        }
    }

    /// `C^t(Δ, 1)`.
    pub fn given_t(&self, delta: u64, t: usize) -> f64 {
        if delta == 0 {
            self.at_zero[t - 1]
        } else {
            self.intercept[t - 1] + self.slope[t - 1] * delta as f64
        }
    }

    /// `C(Δ, a)`.
    pub fn aggregate(&self, delta: u64, action: Action) -> f64 {
        match action {
            Action::Idle => delta as f64,
            Action::Transmit => self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| w * self.given_t(delta, i + 1))
                .sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DelayModel;

    fn src(p: f64) -> SourceModel {
        SourceModel::new(p).unwrap()
    }

    #[test]
    fn ck_examples() {
        for d in 0..6 {
            assert_eq!(cost_ck(&src(0.3), d, 0), d as f64);
        }
        assert!((cost_ck(&src(0.3), 0, 1) - 0.3).abs() < 1e-15);
        assert!((cost_ck(&src(0.3), 1, 2) - 1.56).abs() < 1e-14);
    }

    #[test]
    fn given_t_examples() {
        assert_eq!(cost_tx_given_t(&src(0.3), 9, 1), 9.0);
        assert!((cost_tx_given_t(&src(0.3), 0, 2) - 0.3).abs() < 1e-15);
        let expect = 5.0 + cost_ck(&src(0.3), 5, 1);
        assert!((cost_tx_given_t(&src(0.3), 5, 2) - expect).abs() < 1e-15);
    }

    #[test]
    fn epoch_examples() {
        let sys = System::new(
            src(0.35),
            DelayModel::from_pmf(vec![1.0, 0.0], Variant::GuaranteedDelivery, 0.0).unwrap(),
        );
        assert_eq!(cost_epoch(&sys, 7, Action::Idle), 7.0);
        assert_eq!(cost_epoch(&sys, 7, Action::Transmit), 7.0);
    }

    #[test]
    fn shift_examples() {
        let sys = System::new(
            src(0.5),
            DelayModel::from_pmf(vec![1.0, 0.0], Variant::GuaranteedDelivery, 0.0).unwrap(),
        );
        assert!((cost_shift(&sys, 1) - 1.0).abs() < 1e-15);
        for v in [Variant::GuaranteedDelivery, Variant::DiscardAfterTmax] {
            let sys = System::new(src(0.35), DelayModel::geometric(0.7, 5, v).unwrap());
            for t in 1..=5 {
                let shift = cost_shift(&sys, t);
                assert!((shift - t as f64 * cost_shift(&sys, 1)).abs() < 1e-12);
                for delta in [t + 1, t + 5, t + 20] {
                    let diff = cost_epoch(&sys, delta as u64, Action::Transmit)
                        - cost_epoch(&sys, (delta - t) as u64, Action::Transmit);
                    assert!((diff - shift).abs() < 1e-10, "{v:?} t={t} delta={delta}");
                }
            }
        }
    }

    #[test]
    fn table_matches_direct_formulas() {
        for v in [Variant::GuaranteedDelivery, Variant::DiscardAfterTmax] {
            let sys = System::new(src(0.2), DelayModel::geometric(0.4, 6, v).unwrap());
            let table = EpochCostTable::new(&sys);
            for delta in 0..40 {
                for t in 1..=6 {
                    let direct = cost_tx_given_t(sys.source(), delta, t);
                    assert!((table.given_t(delta, t) - direct).abs() < 1e-10 * direct.max(1.0));
                }
                for a in Action::ALL {
                    let direct = cost_epoch(&sys, delta, a);
                    assert!((table.aggregate(delta, a) - direct).abs() < 1e-10 * direct.max(1.0));
                }
                assert!(table.aggregate(delta, Action::Transmit) >= delta as f64);
            }
        }
    }
}
