//! Slot-level Monte Carlo simulation of source, channel and receiver.
//!
//! Each slot proceeds as follows: the AoII `Δ_k` is recorded; an idle
//! transmitter consults the policy and may start sending the current source
//! value; the source flips with probability `p`; an in-flight update advances
//! one slot and is delivered (or dropped at `t_max` under discard); finally
//! `Δ_{k+1} = 1{X ≠ X̂} (Δ_k + 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AoiiError, Result};
use crate::mdp::TabularPolicy;
use crate::model::{System, Variant};
use crate::threshold::Threshold;

/// Name of the generator recorded in every [`SimResult`].
pub const RNG_NAME: &str = "ChaCha8";

/// Idle visits are tallied individually for `Δ < VISIT_CAP`.
pub const VISIT_CAP: usize = 256;

/// Decision rule consulted at idle slots.
pub trait Policy {
    fn transmit(&mut self, delta: u64) -> bool;
}

impl Policy for Threshold {
    fn transmit(&mut self, delta: u64) -> bool {
        self.transmits_at(delta)
    }
}

/// States beyond the table reuse the decision at its last entry.
impl Policy for TabularPolicy {
    fn transmit(&mut self, delta: u64) -> bool {
        let last = self.actions().len() as u64 - 1;
        self.action(delta.min(last)) == crate::kernel::Action::Transmit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Slots averaged over, after warmup.
    pub slots: u64,
    pub seed: u64,
    /// ChaCha stream, so that runs sharing a seed stay independent.
    pub stream: u64,
    pub warmup: u64,
    pub batch_count: u64,
}

impl SimConfig {
    pub fn new(slots: u64, seed: u64) -> Self {
        Self {
            slots,
            seed,
            stream: 0,
            warmup: 10_000,
            batch_count: 30,
        }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_count < 2 {
            return Err(AoiiError::Config("batch_count must be at least 2".into()));
        }
        if self.slots < self.batch_count {
            return Err(AoiiError::Config(format!(
                "slots ({}) must be at least batch_count ({})",
                self.slots, self.batch_count
            )));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_aoii: f64,
    /// Batch-means standard error of `mean_aoii`.
    pub std_error: f64,
    /// Fraction of slots spent idle with AoII `Δ`, for `Δ < VISIT_CAP`.
    pub visit_freq: Vec<f64>,
    /// Fraction of slots spent idle with AoII at least `VISIT_CAP`.
    pub visit_overflow: f64,
    /// Batch-means standard errors of `visit_freq`.
    pub visit_std_error: Vec<f64>,
    pub transmissions: u64,
    pub deliveries: u64,
    pub discards: u64,
    /// Slots actually averaged (a multiple of the batch count).
    pub slots: u64,
    pub seed: u64,
    pub stream: u64,
    pub rng: String,
}

struct Delay {
    cdf: Vec<f64>,
}

impl Delay {
    fn new(sys: &System) -> Self {
        let d = sys.delay();
        Self {
            cdf: (1..=sys.t_max()).map(|t| d.cdf(t)).collect(),
        }
    }

    /// Delivery slot, or `None` if the update is dropped.
    fn draw(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        let u: f64 = rng.random();
        self.cdf.iter().position(|&c| u < c).map(|i| i + 1)
    }
}

struct InFlight {
    value: bool,
    elapsed: usize,
    /// `None` under discard when the update will be dropped.
    deliver_at: Option<usize>,
}

struct Channel<'a> {
    sys: &'a System,
    delay: Delay,
    source: bool,
    estimate: bool,
    /// The transmitter's copy of the receiver estimate, kept via ACKs.
    acked: bool,
    delta: u64,
    flight: Option<InFlight>,
    transmissions: u64,
    deliveries: u64,
    discards: u64,
}

impl<'a> Channel<'a> {
    fn new(sys: &'a System, delta: u64) -> Self {
        Self {
            sys,
            delay: Delay::new(sys),
            source: true,
            estimate: delta == 0,
            acked: delta == 0,
            delta,
            flight: None,
            transmissions: 0,
            deliveries: 0,
            discards: 0,
        }
    }

    fn start(&mut self, rng: &mut ChaCha8Rng) {
        let deliver_at = self.delay.draw(rng);
        debug_assert!(deliver_at.is_some() || self.sys.variant() == Variant::DiscardAfterTmax);
        self.flight = Some(InFlight {
            value: self.source,
            elapsed: 0,
            deliver_at,
        });
        self.transmissions += 1;
    }

    /// Advances one slot after the decision has been taken.
    fn advance(&mut self, rng: &mut ChaCha8Rng) {
        if rng.random_bool(self.sys.p()) {
            self.source = !self.source;
        }
        if let Some(f) = self.flight.as_mut() {
            f.elapsed += 1;
            if f.deliver_at == Some(f.elapsed) {
                self.estimate = f.value;
                self.acked = f.value;
                self.deliveries += 1;
                self.flight = None;
            } else if f.elapsed == self.sys.t_max() {
                self.discards += 1;
                self.flight = None;
            }
        }
        debug_assert_eq!(self.acked, self.estimate);
        self.delta = if self.source != self.estimate {
            self.delta + 1
        } else {
            0
        };
    }

    fn idle(&self) -> bool {
        self.flight.is_none()
    }
}

fn batch_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `cfg.warmup` unrecorded slots followed by `cfg.slots` recorded ones,
/// starting from `(0, 0, -1)`.
pub fn simulate<P: Policy + ?Sized>(sys: &System, policy: &mut P, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let mut rng = cfg.rng();
    let mut ch = Channel::new(sys, 0);

    for _ in 0..cfg.warmup {
        if ch.idle() && policy.transmit(ch.delta) {
            ch.start(&mut rng);
        }
        ch.advance(&mut rng);
    }
    ch.transmissions = 0;
    ch.deliveries = 0;
    ch.discards = 0;

    let batch_len = cfg.slots / cfg.batch_count;
    let batches = cfg.batch_count as usize;
    let mut batch_means = Vec::with_capacity(batches);
    let mut batch_visits = vec![vec![0u64; VISIT_CAP]; batches];
    let mut overflow = 0u64;
    for visits in batch_visits.iter_mut() {
        let mut sum: u64 = 0;
        for _ in 0..batch_len {
            sum += ch.delta;
            if ch.idle() {
                match visits.get_mut(ch.delta as usize) {
                    Some(v) => *v += 1,
                    None => overflow += 1,
                }
                if policy.transmit(ch.delta) {
                    ch.start(&mut rng);
                }
            }
            ch.advance(&mut rng);
        }
        batch_means.push(sum as f64 / batch_len as f64);
    }

    let (mean_aoii, std_error) = batch_stats(&batch_means);
    let total = batch_len * cfg.batch_count;
    let mut visit_freq = Vec::with_capacity(VISIT_CAP);
    let mut visit_std_error = Vec::with_capacity(VISIT_CAP);
    for d in 0..VISIT_CAP {
        let per_batch: Vec<f64> = batch_visits
            .iter()
            .map(|v| v[d] as f64 / batch_len as f64)
            .collect();
        let (m, se) = batch_stats(&per_batch);
        visit_freq.push(m);
        visit_std_error.push(se);
    }
    Ok(SimResult {
        mean_aoii,
        std_error,
        visit_freq,
        visit_overflow: overflow as f64 / total as f64,
        visit_std_error,
        transmissions: ch.transmissions,
        deliveries: ch.deliveries,
        discards: ch.discards,
        slots: total,
        seed: cfg.seed,
        stream: cfg.stream,
        rng: RNG_NAME.to_string(),
    })
}

/// Monte Carlo estimate of the transmission-epoch cost `C(Δ, 1)`: AoII summed
/// over the slots from the decision at `(Δ, 0, -1)` up to the next idle slot,
/// the starting slot included. Returns the mean and its standard error.
pub fn simulate_epoch_cost(sys: &System, delta0: u64, trials: u64, seed: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(AoiiError::Config("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let mut ch = Channel::new(sys, delta0);
        ch.start(&mut rng);
        let mut cost = 0.0;
        loop {
            cost += ch.delta as f64;
            ch.advance(&mut rng);
            if ch.idle() {
                break;
            }
        }
        debug_assert!(ch.deliveries + ch.discards == 1);
        sum += cost;
        sum_sq += cost * cost;
    }
    let n = trials as f64;
    let mean = sum / n;
    let se = if trials > 1 {
        ((sum_sq - n * mean * mean).max(0.0) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok((mean, se))
}
