mod common;

use aoii::mdp::TabularPolicy;
use aoii::simulator::{simulate, Policy, SimConfig, RNG_NAME};
use aoii::threshold::stationary_tau1;
use aoii::{expected_aoii, Threshold, Variant};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn runs_are_reproducible() {
    let sys = geometric(0.3, 0.6, 4, Variant::DiscardAfterTmax);
    let cfg = SimConfig::new(200_000, 11);
    let a = simulate(&sys, &mut Threshold::Finite(1), &cfg).unwrap();
    let b = simulate(&sys, &mut Threshold::Finite(1), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rng, RNG_NAME);
    let c = simulate(&sys, &mut Threshold::Finite(1), &cfg.with_stream(1)).unwrap();
    assert_ne!(a.mean_aoii, c.mean_aoii);
}

#[test]
fn invalid_batching_is_rejected() {
    let sys = geometric(0.3, 0.6, 4, Variant::GuaranteedDelivery);
    let mut cfg = SimConfig::new(10, 1);
    assert!(simulate(&sys, &mut Threshold::Finite(1), &cfg).is_err());
    cfg.slots = 1000;
    cfg.batch_count = 1;
    assert!(simulate(&sys, &mut Threshold::Finite(1), &cfg).is_err());
}

#[test]
fn idle_visit_frequencies_match_occupancies() {
    for (k, sys) in [
        geometric(0.2, 0.5, 4, Variant::GuaranteedDelivery),
        geometric(0.35, 0.3, 5, Variant::DiscardAfterTmax),
    ]
    .iter()
    .enumerate()
    {
        let sol = stationary_tau1(sys).unwrap();
        let r = simulate(sys, &mut Threshold::Finite(1), &SimConfig::new(4_000_000, 21).with_stream(k as u64)).unwrap();
        for d in 0..sol.pi.len().min(8) {
            let z = (r.visit_freq[d] - sol.pi[d]) / r.visit_std_error[d];
            // ~16 comparisons at one fixed seed
            assert!(z.abs() <= 4.0, "Δ={d}: {} vs {} ({z:.2} SE)", r.visit_freq[d], sol.pi[d]);
        }
    }
}

#[test]
fn delivery_counts_follow_the_variant() {
    let guaranteed = geometric(0.3, 0.0, 3, Variant::GuaranteedDelivery);
    let discard = geometric(0.3, 0.0, 3, Variant::DiscardAfterTmax);
    let cfg = SimConfig::new(100_000, 5);
    let g = simulate(&guaranteed, &mut Threshold::Finite(0), &cfg).unwrap();
    let d = simulate(&discard, &mut Threshold::Finite(0), &cfg).unwrap();
    assert_eq!(g.discards, 0);
    assert!(g.deliveries > 0);
    assert_eq!(d.deliveries, 0);
    assert!(d.discards > 0);
    // with nothing ever delivered the estimate is never refreshed
    assert!((d.mean_aoii - 0.5 / 0.3).abs() <= 4.0 * d.std_error);
}

#[test]
fn tabular_and_threshold_policies_agree() {
    let sys = geometric(0.25, 0.7, 5, Variant::GuaranteedDelivery);
    let cfg = SimConfig::new(300_000, 8);
    let a = simulate(&sys, &mut Threshold::Finite(2), &cfg).unwrap();
    let mut table = TabularPolicy::threshold(Threshold::Finite(2), 50);
    let b = simulate(&sys, &mut table, &cfg).unwrap();
    assert_eq!(a, b);
}

/// Transmits with probability `q` whenever the channel is idle and `Δ ≥ 1`.
struct Randomized {
    q: f64,
    rng: ChaCha8Rng,
}

impl Policy for Randomized {
    fn transmit(&mut self, delta: u64) -> bool {
        delta >= 1 && self.rng.random_bool(self.q)
    }
}

#[test]
fn randomized_policies_do_not_beat_threshold_one() {
    let sys = geometric(0.3, 0.5, 4, Variant::GuaranteedDelivery);
    let best = expected_aoii(&sys, Threshold::Finite(1)).unwrap().expected_aoii;
    for (k, q) in [0.3, 0.7, 0.95].into_iter().enumerate() {
        let mut policy = Randomized { q, rng: ChaCha8Rng::seed_from_u64(100 + k as u64) };
        let r = simulate(&sys, &mut policy, &SimConfig::new(2_000_000, 9).with_stream(k as u64)).unwrap();
        assert!(r.mean_aoii >= best - 3.0 * r.std_error, "q={q}: {} ± {} < {best}", r.mean_aoii, r.std_error);
    }
}

#[test]
fn long_run_means_match_analysis() {
    let sys = geometric(0.15, 0.7, 5, Variant::DiscardAfterTmax);
    for (k, tau) in [Threshold::Finite(1), Threshold::Finite(3), Threshold::Infinite].into_iter().enumerate() {
        let analytic = expected_aoii(&sys, tau).unwrap().expected_aoii;
        let r = simulate(&sys, &mut tau.clone(), &SimConfig::new(10_000_000, 77).with_stream(k as u64)).unwrap();
        assert!((r.mean_aoii - analytic).abs() <= 3.0 * r.std_error, "τ={tau}: {} ± {} vs {analytic}", r.mean_aoii, r.std_error);
    }
}
