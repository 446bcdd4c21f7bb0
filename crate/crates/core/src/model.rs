//! Reaction network parameters, states and the chain's transition structure.
//!
//! The chain lives on `E = N^d`. From a state `a` it can
//!
//! * convert `A_j` into `A_i` autocatalytically, `a -> a - e_j + e_i`, at rate `kappa_i a_i a_j`;
//! * receive an inflow molecule, `a -> a + e_i`, at rate `lambda_i`;
//! * lose a molecule, `a -> a - e_i`, at rate `delta a_i`.
//!
//! Catalytic steps conserve `n = sum a_i`, so the total count is itself a
//! birth-death chain with birth rate `sum lambda_i` and death rate `n delta`.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::log_sum_exp;

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "{name}[{i}] must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

/// Rate constants of the open autocatalytic network.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReactionParams {
    kappa: Vec<f64>,
    lambda: Vec<f64>,
    delta: f64,
}

impl ReactionParams {
    pub fn new(kappa: Vec<f64>, lambda: Vec<f64>, delta: f64) -> Result<Self> {
        if kappa.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "at least two species are required, got {}",
                kappa.len()
            )));
        }
        if lambda.len() != kappa.len() {
            return Err(Error::InvalidParams(format!(
                "kappa has {} entries but lambda has {}",
                kappa.len(),
                lambda.len()
            )));
        }
        check_positive("kappa", &kappa)?;
        check_positive("lambda", &lambda)?;
        check_positive("delta", &[delta])?;
        Ok(ReactionParams { kappa, lambda, delta })
    }

    /// Number of species.
    pub fn d(&self) -> usize {
        self.kappa.len()
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `sum lambda_i`, the birth rate of the total count.
    pub fn total_inflow(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Mean of the stationary total count, `sum lambda_i / delta`.
    pub fn mean_total(&self) -> f64 {
        self.total_inflow() / self.delta
    }

    /// `alpha_i = delta lambda_i / (kappa_i sum_j lambda_j)`.
    pub fn alpha(&self) -> Vec<f64> {
        let total = self.total_inflow();
        self.kappa
            .iter()
            .zip(&self.lambda)
            .map(|(k, l)| self.delta * l / (k * total))
            .collect()
    }

    /// All autocatalytic rates equal.
    pub fn is_neutral(&self) -> bool {
        self.kappa.iter().all(|&k| k == self.kappa[0])
    }

    /// Exchanges the labels of the two species (two-species networks only).
    pub fn swapped(&self) -> Result<Self> {
        self.require_d2("swapped")?;
        Ok(ReactionParams {
            kappa: vec![self.kappa[1], self.kappa[0]],
            lambda: vec![self.lambda[1], self.lambda[0]],
            delta: self.delta,
        })
    }

    /// Two-species parameters labelled so that `kappa_1 <= kappa_2`, and whether
    /// the labels had to be exchanged.
    pub fn canonical_d2(&self) -> Result<(Self, bool)> {
        self.require_d2("canonical_d2")?;
        if self.kappa[0] > self.kappa[1] {
            Ok((self.swapped()?, true))
        } else {
            Ok((self.clone(), false))
        }
    }

    pub(crate) fn require_d2(&self, what: &str) -> Result<()> {
        if self.d() == 2 {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{what} is defined for two species only, got d = {}",
                self.d()
            )))
        }
    }
}

/// `alpha_params`: the Dirichlet parameters matched to the network.
pub fn alpha_params(params: &ReactionParams) -> Vec<f64> {
    params.alpha()
}

/// Volume-scaled parametrisation: `kappa_i = kappa'_i / V`, `lambda_i = D V`,
/// `delta = D`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaledParams {
    volume: f64,
    flow: f64,
    kappa_prime: Vec<f64>,
}

impl ScaledParams {
    pub fn new(volume: f64, flow: f64, kappa_prime: Vec<f64>) -> Result<Self> {
        check_positive("V", &[volume])?;
        check_positive("D", &[flow])?;
        if kappa_prime.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "at least two species are required, got {}",
                kappa_prime.len()
            )));
        }
        check_positive("kappa_prime", &kappa_prime)?;
        Ok(ScaledParams {
            volume,
            flow,
            kappa_prime,
        })
    }

    /// `V`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// `D`.
    pub fn flow(&self) -> f64 {
        self.flow
    }

    pub fn kappa_prime(&self) -> &[f64] {
        &self.kappa_prime
    }

    pub fn d(&self) -> usize {
        self.kappa_prime.len()
    }

    pub fn to_unscaled(&self) -> ReactionParams {
        let d = self.d();
        ReactionParams {
            kappa: self.kappa_prime.iter().map(|k| k / self.volume).collect(),
            lambda: vec![self.flow * self.volume; d],
            delta: self.flow,
        }
    }

    /// `alpha_i = D V / (d kappa'_i)`.
    pub fn alpha(&self) -> Vec<f64> {
        let dv = self.flow * self.volume;
        let d = self.d() as f64;
        self.kappa_prime.iter().map(|k| dv / (d * k)).collect()
    }

    pub fn swapped(&self) -> Result<Self> {
        if self.d() != 2 {
            return Err(Error::Precondition(format!(
                "label exchange is defined for two species only, got d = {}",
                self.d()
            )));
        }
        Ok(ScaledParams {
            volume: self.volume,
            flow: self.flow,
            kappa_prime: vec![self.kappa_prime[1], self.kappa_prime[0]],
        })
    }
}

/// Species counts `a` with the total `n` cached.
///
/// Ordered by `(n, a)` with `a` compared lexicographically. Hashing and equality
/// only look at the counts, so a map keyed by `State` can be queried with a
/// plain `&[u64]`.
#[derive(Clone, Debug)]
pub struct State {
    counts: Vec<u64>,
    total: u64,
}

impl State {
    pub fn new(counts: Vec<u64>) -> State {
        let total = counts.iter().sum();
        State { counts, total }
    }

    pub fn d2(a1: u64, a2: u64) -> State {
        State::new(vec![a1, a2])
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, i: usize) -> u64 {
        self.counts[i]
    }

    /// `a + e_plus - e_minus`; `None` if a coordinate would become negative.
    pub fn shifted(&self, plus: Option<usize>, minus: Option<usize>) -> Option<State> {
        let mut c = self.counts.clone();
        if let Some(j) = minus {
            c[j] = c[j].checked_sub(1)?;
        }
        if let Some(i) = plus {
            c[i] += 1;
        }
        Some(State::new(c))
    }

    /// Same counts with the two species exchanged (two-species states).
    pub fn swapped(&self) -> State {
        let mut c = self.counts.clone();
        c.reverse();
        State::new(c)
    }

    pub fn min_count(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }
}

impl PartialEq for State {
    fn eq(&self, other: &State) -> bool {
        self.counts == other.counts
    }
}

impl Eq for State {}

impl Hash for State {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.counts[..].hash(state);
    }
}

impl Borrow<[u64]> for State {
    fn borrow(&self) -> &[u64] {
        &self.counts
    }
}

impl Ord for State {
    fn cmp(&self, other: &State) -> Ordering {
        self.total
            .cmp(&other.total)
            .then_with(|| self.counts.cmp(&other.counts))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &State) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Kind of a single transition of the open network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reaction {
    /// `A_loss + A_gain -> 2 A_gain`.
    Catalytic { gain: usize, loss: usize },
    Inflow(usize),
    Outflow(usize),
}

impl Reaction {
    /// Applies the reaction to `counts` in place.
    pub fn apply(&self, counts: &mut [u64]) {
        match *self {
            Reaction::Catalytic { gain, loss } => {
                counts[loss] -= 1;
                counts[gain] += 1;
            }
            Reaction::Inflow(i) => counts[i] += 1,
            Reaction::Outflow(i) => counts[i] -= 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub reaction: Reaction,
    pub target: State,
    pub rate: f64,
}

/// Calls `f(reaction, rate)` for every transition with positive rate out of `counts`.
#[inline]
pub fn for_each_rate(params: &ReactionParams, counts: &[u64], mut f: impl FnMut(Reaction, f64)) {
    for (i, &ci) in counts.iter().enumerate() {
        if ci == 0 {
            continue;
        }
        for (j, &cj) in counts.iter().enumerate() {
            if j != i && cj > 0 {
                f(Reaction::Catalytic { gain: i, loss: j }, params.kappa[i] * ci as f64 * cj as f64);
            }
        }
    }
    for i in 0..params.d() {
        f(Reaction::Inflow(i), params.lambda[i]);
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            f(Reaction::Outflow(i), params.delta * c as f64);
        }
    }
}

/// Every transition out of `a` with strictly positive rate.
pub fn enabled_transitions(params: &ReactionParams, a: &State) -> Vec<Transition> {
    let mut out = Vec::with_capacity(params.d() * (params.d() + 1));
    for_each_rate(params, a.counts(), |reaction, rate| {
        let mut c = a.counts().to_vec();
        reaction.apply(&mut c);
        out.push(Transition {
            reaction,
            target: State::new(c),
            rate,
        });
    });
    out
}

/// Total rate of leaving `a`.
pub fn exit_rate(params: &ReactionParams, counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let catalytic: f64 = params
        .kappa
        .iter()
        .zip(counts)
        .map(|(k, &c)| k * c as f64 * (n - c) as f64)
        .sum();
    catalytic + params.total_inflow() + params.delta * n as f64
}

/// Every `(source, rate)` pair with a positive-rate transition into `a`.
pub fn predecessors(params: &ReactionParams, a: &State) -> Vec<(State, f64)> {
    let d = params.d();
    let mut out = Vec::new();
    // catalytic: b = a - e_i + e_j moves to a by gaining i from j
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            if let Some(b) = a.shifted(Some(j), Some(i)) {
                let rate = params.kappa[i] * b.get(i) as f64 * b.get(j) as f64;
                if rate > 0.0 {
                    out.push((b, rate));
                }
            }
        }
    }
    for i in 0..d {
        if let Some(b) = a.shifted(None, Some(i)) {
            out.push((b, params.lambda[i]));
        }
    }
    for i in 0..d {
        let b = a.shifted(Some(i), None).expect("adding a molecule is always valid");
        out.push((b.clone(), params.delta * b.get(i) as f64));
    }
    out
}

/// `(A* p)(a)`: probability flux into `a` minus flux out of `a`. States missing
/// from `p` carry probability zero.
pub fn adjoint_apply(params: &ReactionParams, p: &Distribution, a: &State) -> f64 {
    let inflow: f64 = predecessors(params, a)
        .iter()
        .map(|(b, rate)| rate * p.prob(b))
        .sum();
    inflow - exit_rate(params, a.counts()) * p.prob(a)
}

/// `(A f)(a) = sum_b q(a, b) (f(b) - f(a))`.
pub fn generator_apply(params: &ReactionParams, f: impl Fn(&State) -> f64, a: &State) -> f64 {
    let fa = f(a);
    enabled_transitions(params, a)
        .iter()
        .map(|t| t.rate * (f(&t.target) - fa))
        .sum()
}

/// Birth and death rates `(sum lambda_i, n delta)` of the total count.
pub fn lumped_rates(params: &ReactionParams, n: u64) -> (f64, f64) {
    (params.total_inflow(), n as f64 * params.delta)
}

/// Moran model with genic selection and parent-independent mutation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MoranParams {
    n: u64,
    kappa: Vec<f64>,
    v: f64,
    p: Vec<f64>,
}

impl MoranParams {
    pub fn new(n: u64, kappa: Vec<f64>, v: f64, p: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("population size must be positive".into()));
        }
        if kappa.len() < 2 || p.len() != kappa.len() {
            return Err(Error::InvalidParams(format!(
                "need matching kappa and p with at least two types, got {} and {}",
                kappa.len(),
                p.len()
            )));
        }
        check_positive("kappa", &kappa)?;
        check_positive("v", &[v])?;
        if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidParams("mutation targets p must be non-negative".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("mutation targets p sum to {s}, not 1")));
        }
        Ok(MoranParams { n, kappa, v, p })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn d(&self) -> usize {
        self.kappa.len()
    }

    /// `alpha_i = n v p_i / kappa_i`.
    pub fn alpha(&self) -> Vec<f64> {
        let nv = self.n as f64 * self.v;
        self.p.iter().zip(&self.kappa).map(|(p, k)| nv * p / k).collect()
    }
}

/// Moran transitions `a -> a - e_i + e_j` at rate `a_i (kappa_j a_j / n + v p_j)`.
pub fn moran_transitions(mp: &MoranParams, a: &State) -> Result<Vec<(State, f64)>> {
    if a.dim() != mp.d() || a.n() != mp.n {
        return Err(Error::Precondition(format!(
            "Moran state {a} must have {} types summing to {}",
            mp.d(),
            mp.n
        )));
    }
    let n = mp.n as f64;
    let mut out = Vec::new();
    for i in 0..mp.d() {
        if a.get(i) == 0 {
            continue;
        }
        for j in 0..mp.d() {
            if i == j {
                continue;
            }
            let rate = a.get(i) as f64 * (mp.kappa[j] * a.get(j) as f64 / n + mp.v * mp.p[j]);
            if rate > 0.0 {
                out.push((a.shifted(Some(j), Some(i)).expect("a_i > 0"), rate));
            }
        }
    }
    Ok(out)
}

/// A finitely supported probability law stored as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    log_prob: BTreeMap<State, f64>,
    truncation_tail_mass: f64,
}

impl Distribution {
    /// Normalises log-weights; states with weight `-inf` are dropped.
    pub fn from_log_weights(
        weights: impl IntoIterator<Item = (State, f64)>,
        truncation_tail_mass: f64,
    ) -> Result<Distribution> {
        let mut log_prob: BTreeMap<State, f64> = BTreeMap::new();
        for (s, w) in weights {
            if w.is_nan() || w == f64::INFINITY {
                return Err(Error::domain("Distribution", format!("invalid log-weight {w} at {s}")));
            }
            if w > f64::NEG_INFINITY {
                log_prob.insert(s, w);
            }
        }
        let values: Vec<f64> = log_prob.values().copied().collect();
        let z = log_sum_exp(&values);
        if z == f64::NEG_INFINITY {
            return Err(Error::EmptyMeasure);
        }
        for v in log_prob.values_mut() {
            *v -= z;
        }
        Ok(Distribution {
            log_prob,
            truncation_tail_mass,
        })
    }

    /// Normalises non-negative weights.
    pub fn from_weights(
        weights: impl IntoIterator<Item = (State, f64)>,
        truncation_tail_mass: f64,
    ) -> Result<Distribution> {
        Distribution::from_log_weights(
            weights.into_iter().map(|(s, w)| (s, if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })),
            truncation_tail_mass,
        )
    }

    /// A single point.
    pub fn point_mass(s: State) -> Distribution {
        let mut log_prob = BTreeMap::new();
        log_prob.insert(s, 0.0);
        Distribution {
            log_prob,
            truncation_tail_mass: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prob.is_empty()
    }

    /// `ln p(a)`, `-inf` off the support.
    pub fn log_prob(&self, a: &State) -> f64 {
        self.log_prob.get(a).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn prob(&self, a: &State) -> f64 {
        self.log_prob(a).exp()
    }

    pub fn support(&self) -> impl Iterator<Item = &State> {
        self.log_prob.keys()
    }

    /// `(state, log p)` in `(n, a)` order.
    pub fn iter(&self) -> impl Iterator<Item = (&State, f64)> {
        self.log_prob.iter().map(|(s, &l)| (s, l))
    }

    pub fn truncation_tail_mass(&self) -> f64 {
        self.truncation_tail_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.log_prob.values().map(|l| l.exp()).sum()
    }

    /// Probability of the set of states satisfying `pred`.
    pub fn mass_where(&self, pred: impl Fn(&State) -> bool) -> f64 {
        self.iter().filter(|(s, _)| pred(s)).map(|(_, l)| l.exp()).sum()
    }

    /// Marginal law of the total count.
    pub fn total_count_marginal(&self) -> BTreeMap<u64, f64> {
        let mut m = BTreeMap::new();
        for (s, l) in self.iter() {
            *m.entry(s.n()).or_insert(0.0) += l.exp();
        }
        m
    }
}

/// Parameter file schema shared with the command-line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ParamsConfig {
    Raw {
        d: usize,
        kappa: Vec<f64>,
        lambda: Vec<f64>,
        delta: f64,
    },
    Scaled {
        #[serde(rename = "V")]
        volume: f64,
        #[serde(rename = "D")]
        flow: f64,
        kappa_prime: Vec<f64>,
    },
}

impl ParamsConfig {
    pub fn reaction_params(&self) -> Result<ReactionParams> {
        match self {
            ParamsConfig::Raw {
                d,
                kappa,
                lambda,
                delta,
            } => {
                if *d != kappa.len() {
                    return Err(Error::InvalidParams(format!(
                        "d = {d} but kappa has {} entries",
                        kappa.len()
                    )));
                }
                ReactionParams::new(kappa.clone(), lambda.clone(), *delta)
            }
            ParamsConfig::Scaled { .. } => Ok(self.scaled_params()?.expect("scaled").to_unscaled()),
        }
    }

    /// The scaled parametrisation, when the file used it.
    pub fn scaled_params(&self) -> Result<Option<ScaledParams>> {
        match self {
            ParamsConfig::Raw { .. } => Ok(None),
            ParamsConfig::Scaled {
                volume,
                flow,
                kappa_prime,
            } => ScaledParams::new(*volume, *flow, kappa_prime.clone()).map(Some),
        }
    }
}
