//! Source and channel models.
//!
//! The source is a two-state symmetric Markov chain that flips with
//! probability `p` each slot. The channel delivers an update after a random
//! number of slots `T` drawn i.i.d. from a distribution on `1..=t_max`, either
//! always delivering by `t_max` ([`Variant::GuaranteedDelivery`]) or dropping
//! the update at the end of slot `t_max` ([`Variant::DiscardAfterTmax`]).

use serde::{Deserialize, Serialize};

use crate::error::{AoiiError, Result};

/// Tolerance for every probability-mass identity checked after construction.
pub const MASS_TOL: f64 = 1e-12;

/// Raw distributions whose mass deviates from one by less than this are
/// silently renormalized; anything further off is rejected.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Two-state symmetric Markov source with per-slot flip probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    p: f64,
}

impl SourceModel {
    /// Accepts `0 < p <= 1/2`.
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 {
            return Err(AoiiError::Domain {
                name: "p",
                value: p,
                reason: "flip probability must be > 0".into(),
            });
        }
        if p > 0.5 {
            return Err(AoiiError::Domain {
                name: "p",
                value: p,
                reason: "flip probability must be <= 1/2 (last-update estimator regime)".into(),
            });
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Probability that the source occupies its starting state after `t` slots.
    ///
    /// Closed form of entry (1,1) of `[[1-p, p], [p, 1-p]]^t`; equals 1 at `t = 0`.
    pub fn p_pow(&self, t: u64) -> f64 {
        if t == 0 {
            return 1.0;
        }
        let r = 1.0 - 2.0 * self.p;
        let exp = i32::try_from(t).unwrap_or(i32::MAX);
        0.5 * (1.0 + r.powi(exp))
    }
}

/// What happens to an update still in flight at the end of slot `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Every update is delivered within `t_max` slots.
    GuaranteedDelivery,
    /// Updates not delivered by the end of slot `t_max` are dropped.
    DiscardAfterTmax,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::GuaranteedDelivery => "guaranteed",
            Variant::DiscardAfterTmax => "discard",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = AoiiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guaranteed" | "guaranteed_delivery" | "assumption1" => {
                Ok(Variant::GuaranteedDelivery)
            }
            "discard" | "discard_after_tmax" | "assumption2" => Ok(Variant::DiscardAfterTmax),
            other => Err(AoiiError::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// Transmission-time distribution on `1..=t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    /// `pmf[t - 1] = Pr(T = t)`.
    pmf: Vec<f64>,
    /// `cumulative[t] = Pr(T <= t)`, with `cumulative[0] = 0`.
    cumulative: Vec<f64>,
    variant: Variant,
    /// Mass beyond `t_max`; zero under guaranteed delivery.
    p_tail: f64,
    /// Mass beyond `t_max` that was folded into `pmf[t_max - 1]` at construction.
    folded_tail: f64,
}

impl DelayModel {
    /// Builds a model from an explicit PMF. Sums within [`RENORMALIZE_TOL`] of
    /// one are rescaled; under guaranteed delivery `p_tail` must be zero.
    pub fn from_pmf(pmf: Vec<f64>, variant: Variant, p_tail: f64) -> Result<Self> {
        Self::build(pmf, variant, p_tail, 0.0)
    }

    fn build(mut pmf: Vec<f64>, variant: Variant, mut p_tail: f64, folded: f64) -> Result<Self> {
        if pmf.len() < 2 {
            return Err(AoiiError::Domain {
                name: "t_max",
                value: pmf.len() as f64,
                reason: "t_max must be at least 2".into(),
            });
        }
        if let Some((i, bad)) = pmf
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(AoiiError::InvalidPmf(format!(
                "p_{} = {bad} is not a probability",
                i + 1
            )));
        }
        if !p_tail.is_finite() || p_tail < 0.0 {
            return Err(AoiiError::InvalidPmf(format!("tail mass {p_tail} is negative")));
        }
        if variant == Variant::GuaranteedDelivery && p_tail != 0.0 {
            return Err(AoiiError::InvalidPmf(
                "guaranteed delivery admits no mass beyond t_max".into(),
            ));
        }
        let total: f64 = pmf.iter().sum::<f64>() + p_tail;
        if (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(AoiiError::InvalidPmf(format!(
                "total mass {total} differs from 1 by more than {RENORMALIZE_TOL:e}"
            )));
        }
        if total != 1.0 {
            pmf.iter_mut().for_each(|v| *v /= total);
            p_tail /= total;
        }
        let mut cumulative = Vec::with_capacity(pmf.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for v in &pmf {
            acc += v;
            cumulative.push(acc);
        }
        if variant == Variant::GuaranteedDelivery {
            // Pr(T <= t_max) is exactly one under guaranteed delivery.
            *cumulative.last_mut().unwrap() = 1.0;
        }
        Ok(Self {
            pmf,
            cumulative,
            variant,
            p_tail,
            folded_tail: folded,
        })
    }

    /// `p_t = (1 - p_s)^(t-1) p_s` truncated at `t_max`. Under guaranteed
    /// delivery the residual mass is folded into `p_{t_max}`; under discard it
    /// becomes the tail mass.
    pub fn geometric(p_s: f64, t_max: usize, variant: Variant) -> Result<Self> {
        if !p_s.is_finite() || !(0.0..1.0).contains(&p_s) {
            return Err(AoiiError::Domain {
                name: "p_s",
                value: p_s,
                reason: "success probability must lie in [0, 1)".into(),
            });
        }
        check_t_max(t_max)?;
        let q = 1.0 - p_s;
        let mut pmf: Vec<f64> = (0..t_max).map(|k| q.powi(k as i32) * p_s).collect();
        let residual = q.powi(t_max as i32);
        match variant {
            Variant::GuaranteedDelivery => {
                pmf[t_max - 1] += residual;
                Self::build(pmf, variant, 0.0, residual)
            }
            Variant::DiscardAfterTmax => Self::build(pmf, variant, residual, 0.0),
        }
    }

    /// Zipf law `p_t ∝ t^(-a)` on `1..=t_max`, guaranteed delivery.
    pub fn zipf(a: f64, t_max: usize) -> Result<Self> {
        if !a.is_finite() || a < 0.0 {
            return Err(AoiiError::Domain {
                name: "a",
                value: a,
                reason: "Zipf exponent must be >= 0".into(),
            });
        }
        check_t_max(t_max)?;
        let weights: Vec<f64> = (1..=t_max).map(|t| (t as f64).powf(-a)).collect();
        let norm: f64 = weights.iter().sum();
        let pmf = weights.into_iter().map(|w| w / norm).collect();
        Self::build(pmf, Variant::GuaranteedDelivery, 0.0, 0.0)
    }

    /// Half the mass at `t = 1`, half at `t = t_max`, guaranteed delivery.
    pub fn two_point(t_max: usize) -> Result<Self> {
        check_t_max(t_max)?;
        let mut pmf = vec![0.0; t_max];
        pmf[0] = 0.5;
        pmf[t_max - 1] += 0.5;
        Self::build(pmf, Variant::GuaranteedDelivery, 0.0, 0.0)
    }

    pub fn t_max(&self) -> usize {
        self.pmf.len()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `Pr(T = t)` for `1 <= t <= t_max`, zero otherwise.
    pub fn p_t(&self, t: usize) -> f64 {
        if t == 0 || t > self.pmf.len() {
            0.0
        } else {
            self.pmf[t - 1]
        }
    }

    /// `Pr(T <= t)`, clamped to the support.
    pub fn cdf(&self, t: usize) -> f64 {
        self.cumulative[t.min(self.pmf.len())]
    }

    pub fn p_tail(&self) -> f64 {
        self.p_tail
    }

    /// Mass moved into `p_{t_max}` when the distribution was truncated.
    pub fn folded_tail(&self) -> f64 {
        self.folded_tail
    }

    /// Total mass including the tail.
    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.p_tail
    }

    /// Expected channel occupancy per transmission, in slots.
    pub fn expected_transmission_time(&self) -> f64 {
        let delivered: f64 = self
            .pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum();
        match self.variant {
            Variant::GuaranteedDelivery => delivered,
            Variant::DiscardAfterTmax => delivered + self.t_max() as f64 * self.p_tail,
        }
    }

    /// Probability that a transmission in progress for `t` slots lasts past
    /// slot `t + 1`. Zero at `t = t_max - 1` under guaranteed delivery and
    /// whenever the conditioning event has no mass.
    pub fn survival(&self, t: usize) -> f64 {
        debug_assert!(t < self.t_max());
        if self.variant == Variant::GuaranteedDelivery && t + 1 >= self.t_max() {
            return 0.0;
        }
        let alive = 1.0 - self.cdf(t);
        if alive <= 0.0 {
            // The state is unreachable; any distribution keeps rows stochastic.
            return 0.0;
        }
        ((1.0 - self.cdf(t + 1)) / alive).clamp(0.0, 1.0)
    }
}

fn check_t_max(t_max: usize) -> Result<()> {
    if t_max < 2 {
        return Err(AoiiError::Domain {
            name: "t_max",
            value: t_max as f64,
            reason: "t_max must be at least 2".into(),
        });
    }
    Ok(())
}

/// Channel status component of the system state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// No transmission in progress (`i = -1`).
    Idle,
    /// The update in flight equals the receiver's estimate (`i = 0`).
    BusySame,
    /// The update in flight differs from the receiver's estimate (`i = 1`).
    BusyDiff,
}

impl Channel {
    pub fn code(&self) -> i8 {
        match self {
            Channel::Idle => -1,
            Channel::BusySame => 0,
            Channel::BusyDiff => 1,
        }
    }
}

/// System state `(Δ, t, i)` at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    pub delta: u64,
    pub t: usize,
    pub channel: Channel,
}

impl SystemState {
    /// Enforces `channel == Idle` iff `t == 0`.
    pub fn new(delta: u64, t: usize, channel: Channel) -> Result<Self> {
        if (channel == Channel::Idle) != (t == 0) {
            return Err(AoiiError::InvalidState {
                delta,
                t,
                reason: "channel is idle if and only if t = 0",
            });
        }
        Ok(Self { delta, t, channel })
    }

    pub fn idle(delta: u64) -> Self {
        Self {
            delta,
            t: 0,
            channel: Channel::Idle,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.channel == Channel::Idle
    }
}

/// A source and delay model pair with the per-model power tables used by
/// every transition and cost formula.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    source: SourceModel,
    delay: DelayModel,
    /// `stay[t] = p^(t)` for `0 <= t <= t_max`.
    stay: Vec<f64>,
    /// `keep[k] = (1 - p)^k` for `0 <= k <= t_max`.
    keep: Vec<f64>,
}

impl System {
    pub fn new(source: SourceModel, delay: DelayModel) -> Self {
        let t_max = delay.t_max();
        let stay = (0..=t_max as u64).map(|t| source.p_pow(t)).collect();
        let q = 1.0 - source.p();
        let keep = (0..=t_max as i32).map(|k| q.powi(k)).collect();
        Self {
            source,
            delay,
            stay,
            keep,
        }
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn delay(&self) -> &DelayModel {
        &self.delay
    }

    pub fn p(&self) -> f64 {
        self.source.p()
    }

    pub fn t_max(&self) -> usize {
        self.delay.t_max()
    }

    pub fn variant(&self) -> Variant {
        self.delay.variant()
    }

    /// `p^(t)` from the precomputed table, `t <= t_max`.
    pub(crate) fn stay(&self, t: usize) -> f64 {
        self.stay[t]
    }

    /// `(1 - p)^k` from the precomputed table, `k <= t_max`.
    pub(crate) fn keep(&self, k: usize) -> f64 {
        self.keep[k]
    }

    pub fn expected_transmission_time(&self) -> f64 {
        self.delay.expected_transmission_time()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_power_11(p: f64, t: u32) -> f64 {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        let step = [[1.0 - p, p], [p, 1.0 - p]];
        for _ in 0..t {
            let mut n = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    n[i][j] = m[i][0] * step[0][j] + m[i][1] * step[1][j];
                }
            }
            m = n;
        }
        m[0][0]
    }

    #[test]
    fn source_domain() {
        assert_eq!(SourceModel::new(0.35).unwrap().p(), 0.35);
        assert_eq!(SourceModel::new(0.5).unwrap().p(), 0.5);
        let err = SourceModel::new(0.6).unwrap_err();
        assert!(err.to_string().contains("<= 1/2"), "{err}");
        assert!(SourceModel::new(0.0).unwrap_err().to_string().contains("> 0"));
        assert!(SourceModel::new(f64::NAN).is_err());
    }

    #[test]
    fn p_pow_examples() {
        let s = SourceModel::new(0.3).unwrap();
        assert_eq!(s.p_pow(0), 1.0);
        assert_eq!(SourceModel::new(0.5).unwrap().p_pow(1), 0.5);
        let s2 = SourceModel::new(0.2).unwrap();
        assert!((s2.p_pow(2) - 0.68).abs() < 1e-15);
        assert!((matrix_power_11(0.2, 2) - 0.68).abs() < 1e-15);
    }

    #[test]
    fn p_pow_matches_matrix_power() {
        for i in 1..=50 {
            let p = i as f64 / 100.0;
            let s = SourceModel::new(p).unwrap();
            let mut prev = 1.0;
            for t in 0..=64 {
                let v = s.p_pow(t);
                assert!((v - matrix_power_11(p, t as u32)).abs() < 1e-12);
                assert!((0.5..=1.0).contains(&v));
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn geometric_guaranteed_folds_tail() {
        let d = DelayModel::geometric(0.7, 5, Variant::GuaranteedDelivery).unwrap();
        let expect = [0.7, 0.21, 0.063, 0.0189, 0.0081];
        for (a, b) in d.pmf().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((d.total_mass() - 1.0).abs() < MASS_TOL);
        assert!((d.folded_tail() - 0.3f64.powi(5)).abs() < 1e-15);
        assert_eq!(d.p_tail(), 0.0);
    }

    #[test]
    fn geometric_deterministic_and_discard() {
        let d = DelayModel::geometric(0.0, 5, Variant::GuaranteedDelivery).unwrap();
        assert_eq!(d.pmf(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        let d = DelayModel::geometric(0.7, 5, Variant::DiscardAfterTmax).unwrap();
        assert!((d.p_tail() - 0.00243).abs() < 1e-15);
        assert!((d.total_mass() - 1.0).abs() < MASS_TOL);
        let direct: f64 = (1..=5).map(|t| t as f64 * d.p_t(t)).sum::<f64>() + 5.0 * d.p_tail();
        assert!((d.expected_transmission_time() - direct).abs() < 1e-15);
    }

    #[test]
    fn geometric_rejects_ps_one() {
        assert!(DelayModel::geometric(1.0, 5, Variant::GuaranteedDelivery).is_err());
        assert!(DelayModel::geometric(-0.1, 5, Variant::GuaranteedDelivery).is_err());
        assert!(DelayModel::geometric(0.5, 1, Variant::GuaranteedDelivery).is_err());
    }

    #[test]
    fn zipf_examples() {
        let d = DelayModel::zipf(0.0, 4).unwrap();
        assert!(d.pmf().iter().all(|v| (v - 0.25).abs() < 1e-15));
        let d = DelayModel::zipf(1.0, 2).unwrap();
        assert!((d.p_t(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.p_t(2) - 1.0 / 3.0).abs() < 1e-15);
        let d = DelayModel::zipf(5.0, 2).unwrap();
        assert!((d.p_t(1) - 32.0 / 33.0).abs() < 1e-15);
        assert!((d.p_t(2) - 1.0 / 33.0).abs() < 1e-15);
        assert!(DelayModel::zipf(-1.0, 3).is_err());
    }

    #[test]
    fn two_point_examples() {
        assert_eq!(DelayModel::two_point(5).unwrap().pmf(), &[0.5, 0.0, 0.0, 0.0, 0.5]);
        assert_eq!(DelayModel::two_point(2).unwrap().pmf(), &[0.5, 0.5]);
        assert!(DelayModel::two_point(1).is_err());
        assert_eq!(DelayModel::two_point(5).unwrap().expected_transmission_time(), 3.0);
    }

    #[test]
    fn point_mass_expected_time() {
        let d = DelayModel::from_pmf(vec![0.0, 1.0], Variant::GuaranteedDelivery, 0.0).unwrap();
        assert_eq!(d.expected_transmission_time(), 2.0);
    }

    #[test]
    fn explicit_pmf_renormalizes_or_rejects() {
        let d = DelayModel::from_pmf(vec![0.5, 0.5 + 5e-10], Variant::GuaranteedDelivery, 0.0)
            .unwrap();
        assert!((d.total_mass() - 1.0).abs() < MASS_TOL);
        assert!(DelayModel::from_pmf(vec![0.5, 0.4], Variant::GuaranteedDelivery, 0.0).is_err());
        assert!(DelayModel::from_pmf(vec![0.5, 0.4], Variant::GuaranteedDelivery, 0.1).is_err());
        assert!(DelayModel::from_pmf(vec![0.5, 0.4], Variant::DiscardAfterTmax, 0.1).is_ok());
        assert!(DelayModel::from_pmf(vec![1.2, -0.2], Variant::GuaranteedDelivery, 0.0).is_err());
    }

    #[test]
    fn survival_probabilities() {
        let d = DelayModel::geometric(0.7, 5, Variant::GuaranteedDelivery).unwrap();
        assert!((d.survival(0) - 0.3).abs() < 1e-12);
        assert_eq!(d.survival(4), 0.0);
        let d = DelayModel::geometric(0.7, 5, Variant::DiscardAfterTmax).unwrap();
        assert!((d.survival(4) - 0.3).abs() < 1e-12);
        // unreachable busy states of a point mass at t = 1
        let d = DelayModel::from_pmf(vec![1.0, 0.0, 0.0], Variant::GuaranteedDelivery, 0.0).unwrap();
        assert_eq!(d.survival(0), 0.0);
        assert_eq!(d.survival(1), 0.0);
    }

    #[test]
    fn state_rule() {
        assert!(SystemState::new(3, 0, Channel::Idle).is_ok());
        assert!(SystemState::new(3, 1, Channel::Idle).is_err());
        assert!(SystemState::new(3, 0, Channel::BusyDiff).is_err());
        assert!(SystemState::new(3, 2, Channel::BusySame).is_ok());
    }
}
