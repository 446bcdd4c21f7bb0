//! Exact stochastic simulation (Gillespie's direct method) with occupation-time
//! accounting.
//!
//! Each replica draws from `ChaCha8Rng::seed_from_u64(seed + replica)`, so runs
//! are bit-reproducible on every platform.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{for_each_rate, Distribution, Reaction, ReactionParams, State};
use crate::par;

/// Fraction of `t_max` discarded as burn-in when none is given.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.01;

/// What ends a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Horizon {
    /// Simulated time `t_max` (burn-in included).
    Time(f64),
    /// Number of reactions fired after burn-in.
    Events(u64),
}

/// Configuration of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    horizon: Horizon,
    burn_in: f64,
    seed: u64,
    initial: State,
}

impl SimConfig {
    pub fn new(horizon: Horizon, burn_in: f64, seed: u64, initial: State) -> Result<SimConfig> {
        if !(burn_in >= 0.0 && burn_in.is_finite()) {
            return Err(Error::InvalidParams(format!("burn-in must be finite and >= 0, got {burn_in}")));
        }
        match horizon {
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(Error::InvalidParams(format!("t_max must be finite and > 0, got {t}")));
            }
            Horizon::Time(t) if burn_in >= t => {
                return Err(Error::InvalidParams(format!("burn-in {burn_in} must be shorter than t_max {t}")));
            }
            Horizon::Events(0) => return Err(Error::InvalidParams("max_events must be positive".into())),
            _ => {}
        }
        Ok(SimConfig {
            horizon,
            burn_in,
            seed,
            initial,
        })
    }

    /// Time-governed run with the default burn-in of 1% of `t_max`.
    pub fn with_time(t_max: f64, seed: u64, initial: State) -> Result<SimConfig> {
        SimConfig::new(Horizon::Time(t_max), DEFAULT_BURN_IN_FRACTION * t_max, seed, initial)
    }

    /// Event-governed run without burn-in.
    pub fn with_events(max_events: u64, seed: u64, initial: State) -> Result<SimConfig> {
        SimConfig::new(Horizon::Events(max_events), 0.0, seed, initial)
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn initial(&self) -> &State {
        &self.initial
    }

    /// The same run with another seed.
    pub fn with_seed(&self, seed: u64) -> SimConfig {
        SimConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Time spent in each visited state after burn-in.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OccupationMeasure {
    weights: BTreeMap<State, f64>,
    total_time: f64,
    events: u64,
}

impl OccupationMeasure {
    pub fn from_weights(weights: BTreeMap<State, f64>, events: u64) -> OccupationMeasure {
        let total_time = weights.values().sum();
        OccupationMeasure {
            weights,
            total_time,
            events,
        }
    }

    pub fn weights(&self) -> &BTreeMap<State, f64> {
        &self.weights
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// Reactions fired after burn-in.
    pub fn events(&self) -> u64 {
        self.events
    }

    /// Adds the weights of `other` to `self`.
    pub fn merge(&mut self, other: &OccupationMeasure) {
        for (s, w) in &other.weights {
            *self.weights.entry(s.clone()).or_insert(0.0) += w;
        }
        self.total_time += other.total_time;
        self.events += other.events;
    }

    /// Merges in the given order, which keeps the floating-point sums reproducible.
    pub fn merged<'a>(parts: impl IntoIterator<Item = &'a OccupationMeasure>) -> OccupationMeasure {
        let mut out = OccupationMeasure::default();
        for p in parts {
            out.merge(p);
        }
        out
    }
}

/// Runs the direct method, calling `on_jump(source, reaction)` before every
/// reaction is applied.
pub fn gillespie_run_observed(
    params: &ReactionParams,
    cfg: &SimConfig,
    mut on_jump: impl FnMut(&[u64], Reaction),
) -> Result<OccupationMeasure> {
    if cfg.initial.dim() != params.d() {
        return Err(Error::InvalidParams(format!(
            "initial state {} has {} species, the network has {}",
            cfg.initial,
            cfg.initial.dim(),
            params.d()
        )));
    }
    let (t_end, max_events) = match cfg.horizon {
        Horizon::Time(t) => (t, u64::MAX),
        Horizon::Events(k) => (f64::INFINITY, k),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = cfg.initial.counts().to_vec();
    let mut occ: HashMap<State, f64> = HashMap::new();
    let mut rates: Vec<(Reaction, f64)> = Vec::with_capacity(params.d() * (params.d() + 1));
    let mut t = 0.0f64;
    let mut events = 0u64;
    loop {
        rates.clear();
        for_each_rate(params, &x, |r, w| rates.push((r, w)));
        let total: f64 = rates.iter().map(|&(_, w)| w).sum();
        let dt = if total > 0.0 {
            // 1 - U lies in (0, 1], so the logarithm is finite.
            -(1.0 - rng.random::<f64>()).ln() / total
        } else {
            f64::INFINITY
        };
        let next = t + dt;
        let start = t.max(cfg.burn_in);
        let stop = next.min(t_end);
        if stop > start {
            match occ.get_mut(x.as_slice()) {
                Some(w) => *w += stop - start,
                None => {
                    occ.insert(State::new(x.clone()), stop - start);
                }
            }
        }
        if next >= t_end || total == 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut chosen = rates[rates.len() - 1].0;
        for &(r, w) in &rates {
            if target < w {
                chosen = r;
                break;
            }
            target -= w;
        }
        on_jump(&x, chosen);
        chosen.apply(&mut x);
        t = next;
        if t > cfg.burn_in {
            events += 1;
            if events >= max_events {
                break;
            }
        }
    }
    Ok(OccupationMeasure::from_weights(occ.into_iter().collect(), events))
}

/// One simulation run.
pub fn gillespie_run(params: &ReactionParams, cfg: &SimConfig) -> Result<OccupationMeasure> {
    gillespie_run_observed(params, cfg, |_, _| {})
}

/// Independent replicas with seeds `seed, seed + 1, ...`, returned in seed order.
pub fn run_replicas(params: &ReactionParams, cfg: &SimConfig, replicas: u64) -> Result<Vec<OccupationMeasure>> {
    let n = usize::try_from(replicas).map_err(|_| Error::InvalidParams("too many replicas".into()))?;
    par::try_map_range(n, |i| gillespie_run(params, &cfg.with_seed(cfg.seed.wrapping_add(i as u64))))
}

/// Normalises occupation times to probabilities.
pub fn occupation_to_distribution(occ: &OccupationMeasure) -> Result<Distribution> {
    if !(occ.total_time > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    Distribution::from_weights(occ.weights.iter().map(|(s, &w)| (s.clone(), w)), 0.0)
}

/// Total-variation distance over the union of supports.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> f64 {
    let mut sum = 0.0;
    for (s, lx) in p.iter() {
        sum += (lx.exp() - q.prob(s)).abs();
    }
    for (s, ly) in q.iter() {
        if p.log_prob(s) == f64::NEG_INFINITY {
            sum += ly.exp();
        }
    }
    (0.5 * sum).clamp(0.0, 1.0)
}

/// Time-weighted statistics of the total count `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LumpedStats {
    pub mean_n: f64,
    pub var_n: f64,
    /// Fraction of time spent on each hyperplane `n`.
    pub marginal: BTreeMap<u64, f64>,
}

pub fn lumped_statistics(occ: &OccupationMeasure) -> Result<LumpedStats> {
    if !(occ.total_time > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    let mut marginal: BTreeMap<u64, f64> = BTreeMap::new();
    for (s, w) in &occ.weights {
        *marginal.entry(s.n()).or_insert(0.0) += w / occ.total_time;
    }
    let mean_n: f64 = marginal.iter().map(|(&n, p)| n as f64 * p).sum();
    let var_n: f64 = marginal.iter().map(|(&n, p)| (n as f64 - mean_n).powi(2) * p).sum();
    Ok(LumpedStats { mean_n, var_n, marginal })
}
