//! Reference computations shared by the integration tests. They rebuild the
//! quantities the library computes from the system dynamics alone.
#![allow(dead_code)]

use std::collections::BTreeMap;

use aoii::kernel::{step_kernel, KernelQuery};
use aoii::mdp::{policy_evaluation_dense, TabularPolicy, TruncatedMdp};
use aoii::{Action, DelayModel, SourceModel, System, SystemState, Threshold, Variant};
use nalgebra::{DMatrix, DVector};

pub const VARIANTS: [Variant; 2] = [Variant::GuaranteedDelivery, Variant::DiscardAfterTmax];

pub fn system(p: f64, delay: DelayModel) -> System {
    System::new(SourceModel::new(p).unwrap(), delay)
}

pub fn geometric(p: f64, p_s: f64, t_max: usize, v: Variant) -> System {
    system(p, DelayModel::geometric(p_s, t_max, v).unwrap())
}

/// Delay models used by the grid-wide checks.
pub fn delay_grid() -> Vec<DelayModel> {
    let mut out = Vec::new();
    for v in VARIANTS {
        for p_s in [0.0, 0.3, 0.7, 0.95] {
            for t_max in [2, 3, 5, 8] {
                out.push(DelayModel::geometric(p_s, t_max, v).unwrap());
            }
        }
        out.push(DelayModel::from_pmf(vec![0.0, 1.0, 0.0], v, 0.0).unwrap());
        out.push(DelayModel::from_pmf(vec![1.0, 0.0], v, 0.0).unwrap());
    }
    for a in [0.0, 1.0, 2.5] {
        for t_max in [3, 6] {
            out.push(DelayModel::zipf(a, t_max).unwrap());
        }
    }
    for t_max in [2, 5, 7] {
        out.push(DelayModel::two_point(t_max).unwrap());
    }
    out.push(DelayModel::from_pmf(vec![0.2, 0.3, 0.1, 0.15], Variant::DiscardAfterTmax, 0.25).unwrap());
    out
}

pub const P_GRID: [f64; 6] = [0.05, 0.15, 0.25, 0.35, 0.45, 0.5];

/// Every `(p, delay)` combination of the grid.
pub fn system_grid() -> Vec<System> {
    let delays = delay_grid();
    P_GRID
        .iter()
        .flat_map(|&p| delays.iter().map(move |d| system(p, d.clone())))
        .collect()
}

/// One source path through a transmission that started at idle AoII `delta`.
#[derive(Debug, Clone, Copy)]
pub struct PathOutcome {
    pub prob: f64,
    /// AoII at the first slot after the transmission ends.
    pub to: u64,
    /// AoII summed over the `t` slots of the transmission.
    pub cost: f64,
}

/// Enumerates all `2^t` flip sequences of a `t`-slot transmission started at
/// AoII `delta`. With `deliver`, the receiver adopts the transmitted value at
/// the last slot; otherwise its estimate is untouched.
pub fn enumerate_paths(p: f64, delta: u64, t: usize, deliver: bool) -> Vec<PathOutcome> {
    (0..1u32 << t)
        .map(|mask| {
            let mut source = true;
            let mut estimate = delta == 0;
            let sent = source;
            let mut aoii = delta;
            let mut cost = 0.0;
            let mut prob = 1.0;
            for k in 0..t {
                cost += aoii as f64;
                if mask >> k & 1 == 1 {
                    source = !source;
                    prob *= p;
                } else {
                    prob *= 1.0 - p;
                }
                if deliver && k == t - 1 {
                    estimate = sent;
                }
                aoii = if source != estimate { aoii + 1 } else { 0 };
            }
            PathOutcome { prob, to: aoii, cost }
        })
        .collect()
}

/// `P^t_{Δ,·}` from path enumeration.
pub fn oracle_given_t(p: f64, delta: u64, t: usize, deliver: bool) -> BTreeMap<u64, f64> {
    let mut out = BTreeMap::new();
    for o in enumerate_paths(p, delta, t, deliver) {
        *out.entry(o.to).or_insert(0.0) += o.prob;
    }
    out
}

/// `C^t(Δ, 1)` from path enumeration.
pub fn oracle_cost_given_t(p: f64, delta: u64, t: usize) -> f64 {
    enumerate_paths(p, delta, t, true)
        .iter()
        .map(|o| o.prob * o.cost)
        .sum()
}

/// Delay weights `(t, probability, delivered)` of a model.
pub fn delay_branches(sys: &System) -> Vec<(usize, f64, bool)> {
    let d = sys.delay();
    let mut out: Vec<(usize, f64, bool)> = (1..=sys.t_max())
        .map(|t| (t, d.p_t(t), true))
        .filter(|b| b.1 > 0.0)
        .collect();
    if sys.variant() == Variant::DiscardAfterTmax && d.p_tail() > 0.0 {
        out.push((sys.t_max(), d.p_tail(), false));
    }
    out
}

/// Epoch row, epoch cost and epoch length from idle AoII `delta`.
pub fn oracle_epoch(sys: &System, delta: u64, action: Action) -> (BTreeMap<u64, f64>, f64, f64) {
    let p = sys.p();
    match action {
        Action::Idle => (oracle_given_t(p, delta, 1, false), delta as f64, 1.0),
        Action::Transmit => {
            let mut row = BTreeMap::new();
            let mut cost = 0.0;
            let mut len = 0.0;
            for (t, w, deliver) in delay_branches(sys) {
                for o in enumerate_paths(p, delta, t, deliver) {
                    *row.entry(o.to).or_insert(0.0) += w * o.prob;
                    cost += w * o.prob * o.cost;
                }
                len += w * t as f64;
            }
            (row, cost, len)
        }
    }
}

/// Epoch row obtained by running the single-step kernel until every path has
/// returned to an idle state.
pub fn absorbing_walk(sys: &System, delta: u64, action: Action) -> BTreeMap<u64, f64> {
    let mut absorbed = BTreeMap::new();
    let mut frontier: BTreeMap<SystemState, f64> = BTreeMap::new();
    let first = step_kernel(sys, KernelQuery::new(SystemState::idle(delta), action).unwrap()).unwrap();
    for (s, pr) in first {
        *frontier.entry(s).or_insert(0.0) += pr;
    }
    for _ in 0..=sys.t_max() {
        let mut next = BTreeMap::new();
        for (s, pr) in frontier {
            if s.is_idle() {
                *absorbed.entry(s.delta).or_insert(0.0) += pr;
                continue;
            }
            for (n, q) in step_kernel(sys, KernelQuery::new(s, Action::Idle).unwrap()).unwrap() {
                *next.entry(n).or_insert(0.0) += pr * q;
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    assert!(frontier.is_empty(), "walk did not terminate within t_max slots");
    absorbed
}

/// Stationary behaviour of a threshold policy, from the enumerated epoch chain
/// on idle states `0..=n` (larger AoII lumped into `n`) and renewal-reward.
pub struct OracleStationary {
    /// Fraction of slots spent idle at each AoII.
    pub pi: Vec<f64>,
    pub expected_aoii: f64,
    /// Epoch cost per idle state under the policy.
    pub cost: Vec<f64>,
}

pub fn oracle_stationary(sys: &System, tau: Threshold, n: u64) -> OracleStationary {
    let size = n as usize + 1;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut cost = vec![0.0; size];
    let mut len = vec![0.0; size];
    for d in 0..=n {
        let (row, c, l) = oracle_epoch(sys, d, tau.action(d));
        cost[d as usize] = c;
        len[d as usize] = l;
        for (to, pr) in row {
            a[(to.min(n) as usize, d as usize)] += pr;
        }
    }
    // μ = A μ with Σ μ = 1 replacing the first balance equation.
    for i in 0..size {
        a[(i, i)] -= 1.0;
    }
    for j in 0..size {
        a[(0, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(size);
    b[0] = 1.0;
    let mu = a.lu().solve(&b).expect("epoch chain is irreducible");
    let slots: f64 = mu.iter().zip(&len).map(|(m, l)| m * l).sum();
    let pi: Vec<f64> = mu.iter().map(|m| m / slots).collect();
    let expected_aoii = mu.iter().zip(&cost).map(|(m, c)| m * c).sum::<f64>() / slots;
    OracleStationary {
        pi,
        expected_aoii,
        cost,
    }
}

/// Lowest average cost over all deterministic idle-state policies, by
/// exhaustive search.
pub fn brute_force_optimum(mdp: &TruncatedMdp) -> (f64, TabularPolicy) {
    let idle = mdp.m() as usize + 1;
    assert!(idle <= 16, "exhaustive search is exponential");
    let mut best: Option<(f64, TabularPolicy)> = None;
    for mask in 0..1u32 << idle {
        let actions = (0..idle)
            .map(|d| if mask >> d & 1 == 1 { Action::Transmit } else { Action::Idle })
            .collect();
        let policy = TabularPolicy::new(actions);
        let theta = policy_evaluation_dense(mdp, &policy).unwrap().theta;
        if best.as_ref().is_none_or(|(b, _)| theta < *b) {
            best = Some((theta, policy));
        }
    }
    best.unwrap()
}

/// Compensated running sum.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Stationary law of the never-transmit policy, from its balance equations:
/// `π_1 = p π_0`, `π_{Δ+1} = (1-p) π_Δ`, then normalization. Returns
/// `(π_0, Σ Δ π_Δ, residual of the Δ = 0 balance equation)`.
pub fn never_transmit_stationary(p: f64) -> (f64, f64, f64) {
    let (mut mass, mut first, mut busy) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
    mass.add(1.0);
    let mut u = p;
    let mut delta = 1u64;
    while u > 1e-300 {
        mass.add(u);
        busy.add(u);
        first.add(delta as f64 * u);
        u *= 1.0 - p;
        delta += 1;
    }
    let z = mass.total();
    let pi0 = 1.0 / z;
    let residual = (pi0 - ((1.0 - p) * pi0 + p * busy.total() / z)).abs();
    (pi0, first.total() / z, residual)
}
