mod common;

use aoii::cost::{cost_epoch, cost_shift, cost_tx_given_t, EpochCostTable};
use aoii::simulator::simulate_epoch_cost;
use aoii::{Action, DelayModel, SourceModel, Variant};
use common::*;

#[test]
fn transmission_cost_matches_enumeration() {
    for p in [0.05, 0.13, 0.25, 0.4, 0.5] {
        let src = SourceModel::new(p).unwrap();
        for t in 1..=10 {
            for delta in 0..=15 {
                let want = oracle_cost_given_t(p, delta, t);
                let got = cost_tx_given_t(&src, delta, t);
                assert!((got - want).abs() <= 1e-12 * want.max(1.0), "p={p} t={t} Δ={delta}");
            }
        }
    }
}

#[test]
fn epoch_cost_matches_enumeration_on_the_grid() {
    for sys in system_grid() {
        let table = EpochCostTable::new(&sys);
        for delta in 0..=3 * sys.t_max() as u64 {
            for a in Action::ALL {
                let (_, want, _) = oracle_epoch(&sys, delta, a);
                let got = cost_epoch(&sys, delta, a);
                assert!((got - want).abs() <= 1e-11, "Δ={delta} {a:?}: {got} vs {want}");
                assert!((table.aggregate(delta, a) - got).abs() <= 1e-10 * got.max(1.0));
            }
            for t in 1..=sys.t_max() {
                let exact = cost_tx_given_t(sys.source(), delta, t);
                assert!((table.given_t(delta, t) - exact).abs() <= 1e-10 * exact.max(1.0));
            }
        }
    }
}

#[test]
fn cost_grows_by_a_constant_shift() {
    for sys in system_grid() {
        for t in 1..=sys.t_max() {
            let shift = cost_shift(&sys, t);
            for delta in t as u64 + 1..t as u64 + 20 {
                let diff = cost_epoch(&sys, delta, Action::Transmit)
                    - cost_epoch(&sys, delta - t as u64, Action::Transmit);
                assert!((diff - shift).abs() <= 1e-10, "t={t} Δ={delta}: {diff} vs {shift}");
            }
        }
    }
}

#[test]
fn monte_carlo_epoch_cost() {
    // one-slot delivery: only the starting slot is counted
    let one = system(0.3, DelayModel::from_pmf(vec![1.0, 0.0], Variant::GuaranteedDelivery, 0.0).unwrap());
    let (mean, se) = simulate_epoch_cost(&one, 7, 1000, 3).unwrap();
    assert_eq!((mean, se), (7.0, 0.0));

    let two = system(0.3, DelayModel::from_pmf(vec![0.0, 1.0, 0.0], Variant::GuaranteedDelivery, 0.0).unwrap());
    let (mean, se) = simulate_epoch_cost(&two, 2, 200_000, 4).unwrap();
    let exact = cost_epoch(&two, 2, Action::Transmit);
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} ± {se} vs {exact}");

    for v in VARIANTS {
        let sys = geometric(0.2, 0.4, 6, v);
        let (mean, se) = simulate_epoch_cost(&sys, 0, 200_000, 5).unwrap();
        assert!(mean < sys.t_max() as f64);
        let exact = cost_epoch(&sys, 0, Action::Transmit);
        assert!((mean - exact).abs() <= 3.0 * se, "{v}: {mean} ± {se} vs {exact}");
    }
    assert!(simulate_epoch_cost(&one, 1, 0, 1).is_err());
}
