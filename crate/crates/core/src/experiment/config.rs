//! JSON experiment configuration and its expansion into grid points.

use std::path::Path;

use serde::{Deserialize, Deserializer};

use crate::error::{AoiiError, Result};
use crate::model::{DelayModel, SourceModel, System, Variant};
use crate::simulator::SimConfig;
use crate::threshold::Threshold;

/// A list of values, a single value, or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    One(f64),
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Default for Grid {
    fn default() -> Self {
        Grid::List(Vec::new())
    }
}

impl Grid {
    pub fn values(&self, field: &str) -> Result<Vec<f64>> {
        match self {
            Grid::One(v) => Ok(vec![*v]),
            Grid::List(v) => Ok(v.clone()),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || !start.is_finite() || !stop.is_finite() {
                    return Err(AoiiError::Config(format!(
                        "{field}: range needs finite bounds and step > 0"
                    )));
                }
                if stop < start {
                    return Ok(Vec::new());
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                // snap to 12 decimals so that e.g. 0.05 * 3 prints as 0.15
                Ok((0..=n)
                    .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                    .collect())
            }
        }
    }

    fn integers(&self, field: &str) -> Result<Vec<usize>> {
        self.values(field)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(AoiiError::Config(format!("{field}[{i}] = {v}: expected an integer")))
                }
            })
            .collect()
    }
}

fn variants<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Variant>, D::Error> {
    Vec::<String>::deserialize(d)?
        .iter()
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .collect()
}

fn guaranteed_only() -> Vec<Variant> {
    vec![Variant::GuaranteedDelivery]
}

/// One family of transmission-time distributions.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "delay", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    /// `p_t = (1 - p_s)^(t-1) p_s`, truncated at `t_max`.
    Geometric {
        p_s: Grid,
        t_max: Grid,
        #[serde(default = "guaranteed_only", deserialize_with = "variants")]
        variants: Vec<Variant>,
    },
    /// `p_t ∝ t^(-a)`.
    Zipf { a: Grid, t_max: Grid },
    /// `p_1 = p_{t_max} = 1/2`.
    Twopoint { t_max: Grid },
    /// `pmf[t - 1] = p_t`; under discard, `p_tail` is the mass beyond `t_max`.
    Explicit {
        pmf: Vec<f64>,
        #[serde(default)]
        p_tail: f64,
        #[serde(default = "guaranteed_only", deserialize_with = "variants")]
        variants: Vec<Variant>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Truncation bound; defaults to `max(200, 20 t_max)` per point.
    pub m: Option<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_epsilon() -> f64 {
    1e-9
}

fn default_max_iter() -> usize {
    1_000_000
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            m: None,
            epsilon: default_epsilon(),
            max_iter: default_max_iter(),
        }
    }
}

impl SolverSettings {
    pub fn m_for(&self, t_max: usize) -> u64 {
        self.m.unwrap_or_else(|| 200.max(20 * t_max as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub slots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default = "default_batches")]
    pub batches: u64,
}

fn default_warmup() -> u64 {
    10_000
}

fn default_batches() -> u64 {
    30
}

impl SimulationSettings {
    /// Simulation settings for row `stream` of the output.
    pub fn sim_config(&self, stream: u64) -> SimConfig {
        SimConfig {
            slots: self.slots,
            seed: self.seed,
            stream,
            warmup: self.warmup,
            batch_count: self.batches,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = AoiiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(AoiiError::Config(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    pub path: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub systems: Vec<SystemSpec>,
    #[serde(default)]
    pub p: Grid,
    /// Thresholds evaluated in addition to 0, 1 and ∞.
    #[serde(default)]
    pub tau: Vec<Threshold>,
    pub solver: Option<SolverSettings>,
    pub simulation: Option<SimulationSettings>,
    /// Makes `verify-condition1` fail if any point violates the condition.
    #[serde(default)]
    pub expect_all_hold: bool,
    #[serde(default)]
    pub output: OutputSettings,
}

/// One fully specified model.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub index: usize,
    pub family: &'static str,
    /// `p_s` for geometric, `a` for Zipf.
    pub param: Option<f64>,
    pub system: System,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AoiiError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AoiiError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            AoiiError::Config(msg) => AoiiError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Validates every value and builds all grid points, in output order:
    /// system entry, distribution parameter, `t_max`, variant, then `p`.
    pub fn grid_points(&self) -> Result<Vec<GridPoint>> {
        let sources = self
            .p
            .values("p")?
            .into_iter()
            .enumerate()
            .map(|(i, p)| SourceModel::new(p).map_err(|e| AoiiError::Config(format!("p[{i}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        for tau in &self.tau {
            if let Threshold::Finite(t) = tau {
                if *t > 10_000 {
                    return Err(AoiiError::Config(format!("tau = {t} is unreasonably large")));
                }
            }
        }
        if let Some(s) = &self.solver {
            if !(s.epsilon > 0.0) {
                return Err(AoiiError::Config("solver.epsilon must be > 0".into()));
            }
        }
        if let Some(s) = &self.simulation {
            s.sim_config(0)
                .validate()
                .map_err(|e| AoiiError::Config(format!("simulation: {e}")))?;
        }

        let mut delays: Vec<(&'static str, Option<f64>, DelayModel)> = Vec::new();
        for (si, spec) in self.systems.iter().enumerate() {
            let at = |field: &str| format!("systems[{si}].{field}");
            let wrap = |field: &str, e: AoiiError| AoiiError::Config(format!("{}: {e}", at(field)));
            match spec {
                SystemSpec::Geometric {
                    p_s,
                    t_max,
                    variants,
                } => {
                    let t_maxes = t_max.integers(&at("t_max"))?;
                    for ps in p_s.values(&at("p_s"))? {
                        for &tm in &t_maxes {
                            for &v in variants {
                                let d = DelayModel::geometric(ps, tm, v).map_err(|e| wrap("p_s", e))?;
                                delays.push(("geometric", Some(ps), d));
                            }
                        }
                    }
                }
                SystemSpec::Zipf { a, t_max } => {
                    let t_maxes = t_max.integers(&at("t_max"))?;
                    for a in a.values(&at("a"))? {
                        for &tm in &t_maxes {
                            let d = DelayModel::zipf(a, tm).map_err(|e| wrap("a", e))?;
                            delays.push(("zipf", Some(a), d));
                        }
                    }
                }
                SystemSpec::Twopoint { t_max } => {
                    for tm in t_max.integers(&at("t_max"))? {
                        let d = DelayModel::two_point(tm).map_err(|e| wrap("t_max", e))?;
                        delays.push(("twopoint", None, d));
                    }
                }
                SystemSpec::Explicit {
                    pmf,
                    p_tail,
                    variants,
                } => {
                    for &v in variants {
                        let tail = if v == Variant::DiscardAfterTmax { *p_tail } else { 0.0 };
                        let d = DelayModel::from_pmf(pmf.clone(), v, tail).map_err(|e| wrap("pmf", e))?;
                        delays.push(("explicit", None, d));
                    }
                }
            }
        }

        let mut points = Vec::with_capacity(delays.len() * sources.len());
        for (family, param, delay) in delays {
            for src in &sources {
                points.push(GridPoint {
                    index: points.len(),
                    family,
                    param,
                    system: System::new(*src, delay.clone()),
                });
            }
        }
        Ok(points)
    }

    /// `{0, 1, ∞}` followed by the configured extras, without duplicates.
    pub fn thresholds(&self) -> Vec<Threshold> {
        let mut out = vec![Threshold::Finite(0), Threshold::Finite(1), Threshold::Infinite];
        for t in &self.tau {
            if !out.contains(t) {
                out.push(*t);
            }
        }
        out
    }
}
