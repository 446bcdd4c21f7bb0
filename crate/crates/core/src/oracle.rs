//! Exact stationary laws of finite chains: the open network truncated to
//! `n <= n_max`, and the closed Moran chain.
//!
//! The default solver is Grassmann–Taksar–Heyman (GTH) elimination on the
//! banded generator. States are ordered by `(n, lexicographic a)`, so every
//! transition couples states at most two hyperplanes apart and the elimination
//! never leaves the band. GTH uses no subtractions, so the result is accurate to
//! rounding even when the chain mixes slowly. Uniformised power iteration is
//! available as an independent cross-check.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{for_each_rate, moran_transitions, Distribution, MoranParams, Reaction, ReactionParams, State};
use crate::par;
use crate::stationary::{composition_count, compositions, poisson_tail};

/// Default limit on the number of states of a truncated chain.
pub const DEFAULT_STATE_CAP: u64 = 100_000;
/// Largest banded matrix (in entries) the GTH solver will allocate.
pub const BAND_ENTRY_CAP: u64 = 40_000_000;
/// Required bound on `||A* p||_inf` relative to the largest exit rate.
pub const RESIDUAL_FACTOR: f64 = 1e-12;

/// How transitions leaving `n <= n_max` are handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TruncationPolicy {
    /// Transitions to states outside the set are removed.
    #[default]
    DropOutflowing,
    /// Inflow reactions are disabled on the top hyperplane.
    Reflect,
}

/// The finite state set `{a : n(a) <= n_max}` and its boundary rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TruncationSpec {
    pub n_max: u64,
    pub policy: TruncationPolicy,
}

impl TruncationSpec {
    pub fn new(n_max: u64) -> TruncationSpec {
        TruncationSpec {
            n_max,
            policy: TruncationPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Gth,
    PowerIteration,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub solver: Solver,
    pub state_cap: u64,
    /// Power iteration stops once successive iterates differ by less than this in the sup norm.
    pub power_tol: f64,
    pub max_iterations: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            solver: Solver::Gth,
            state_cap: DEFAULT_STATE_CAP,
            power_tol: 1e-14,
            max_iterations: 5_000_000,
        }
    }
}

/// Stationary vector of a finite chain with its verification data.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSolution {
    pub states: Vec<State>,
    pub prob: Vec<f64>,
    /// `||A* p||_inf`.
    pub residual: f64,
    /// Largest exit rate of any state.
    pub max_rate: f64,
    /// Power iterations used; zero for GTH.
    pub iterations: u64,
}

struct Chain {
    states: Vec<State>,
    out: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
}

fn build_chain<F>(states: Vec<State>, transitions: F) -> Result<Chain>
where
    F: Fn(&State) -> Result<Vec<(State, f64)>> + Sync + Send,
{
    let index: HashMap<&[u64], usize> = states.iter().enumerate().map(|(i, s)| (s.counts(), i)).collect();
    let rows = par::map_slice(&states, |s| -> Result<Vec<(usize, f64)>> {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (t, rate) in transitions(s)? {
            if rate > 0.0 {
                if let Some(&j) = index.get(t.counts()) {
                    row.push((j, rate));
                }
            }
        }
        Ok(row)
    });
    let out = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let exit = out.iter().map(|r| r.iter().map(|&(_, w)| w).sum()).collect();
    Ok(Chain { states, out, exit })
}

impl Chain {
    fn len(&self) -> usize {
        self.states.len()
    }

    fn incoming(&self) -> Vec<Vec<(usize, f64)>> {
        let mut inc = vec![Vec::new(); self.len()];
        for (i, row) in self.out.iter().enumerate() {
            for &(j, w) in row {
                inc[j].push((i, w));
            }
        }
        inc
    }

    fn check_irreducible(&self) -> Result<()> {
        let n = self.len();
        let reach = |adj: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(i) = queue.pop_front() {
                for j in adj(i) {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen
        };
        let fwd = reach(&|i| self.out[i].iter().map(|&(j, _)| j).collect());
        if let Some(k) = fwd.iter().position(|&x| !x) {
            return Err(Error::Reducible(format!(
                "state {} cannot be reached from {}",
                self.states[k], self.states[0]
            )));
        }
        let inc = self.incoming();
        let bwd = reach(&|i| inc[i].iter().map(|&(j, _)| j).collect());
        if let Some(k) = bwd.iter().position(|&x| !x) {
            return Err(Error::Reducible(format!(
                "state {} cannot be reached from {}",
                self.states[0], self.states[k]
            )));
        }
        Ok(())
    }

    /// `(A* p)_j = sum_i p_i q_ij - p_j q_j`.
    fn adjoint(&self, inc: &[Vec<(usize, f64)>], p: &[f64]) -> Vec<f64> {
        par::map_range(self.len(), |j| {
            inc[j].iter().map(|&(i, w)| p[i] * w).sum::<f64>() - p[j] * self.exit[j]
        })
    }

    fn gth(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let (mut bl, mut bu) = (0usize, 0usize);
        for (i, row) in self.out.iter().enumerate() {
            for &(j, _) in row {
                if j < i {
                    bl = bl.max(i - j);
                } else {
                    bu = bu.max(j - i);
                }
            }
        }
        let w = bl + bu + 1;
        let entries = (n as u128) * (w as u128);
        if entries > BAND_ENTRY_CAP as u128 {
            return Err(Error::CapExceeded {
                what: "banded generator",
                needed: entries,
                cap: BAND_ENTRY_CAP,
            });
        }
        // Row i holds columns i - bl ..= i + bu at offsets 0 ..= bl + bu.
        let mut a = vec![0.0f64; n * w];
        let at = |i: usize, j: usize| i * w + j + bl - i;
        for (i, row) in self.out.iter().enumerate() {
            for &(j, rate) in row {
                a[at(i, j)] += rate;
            }
        }
        let mut pivot_row = vec![0.0f64; bl];
        for k in (1..n).rev() {
            let lo = k.saturating_sub(bl);
            let len = k - lo;
            for (t, j) in (lo..k).enumerate() {
                pivot_row[t] = a[at(k, j)];
            }
            let s: f64 = pivot_row[..len].iter().sum();
            if !(s > 0.0) {
                return Err(Error::Reducible(format!(
                    "state {} has no path to lower-indexed states",
                    self.states[k]
                )));
            }
            let top = k.saturating_sub(bu);
            let pivot = &pivot_row[..len];
            let update = |i: usize, row: &mut [f64]| {
                // `row` is row i of the band; column j sits at offset j + bl - i.
                let cik = k + bl - i;
                let aik = row[cik] / s;
                row[cik] = aik;
                if aik != 0.0 {
                    let base = lo + bl - i;
                    for (x, &y) in row[base..base + len].iter_mut().zip(pivot) {
                        *x += aik * y;
                    }
                }
            };
            let rows = &mut a[top * w..k * w];
            if (k - top) * len >= 1 << 14 {
                par::for_each_chunk_mut(rows, w, |r, row| update(top + r, row));
            } else {
                for (r, row) in rows.chunks_mut(w).enumerate() {
                    update(top + r, row);
                }
            }
        }
        let mut x = vec![0.0f64; n];
        x[0] = 1.0;
        for k in 1..n {
            let top = k.saturating_sub(bu);
            x[k] = (top..k).map(|i| x[i] * a[at(i, k)]).sum();
        }
        let z: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= z);
        Ok(x)
    }

    fn power(&self, inc: &[Vec<(usize, f64)>], opts: &SolverOptions) -> Result<(Vec<f64>, u64)> {
        let n = self.len();
        // A uniformisation constant strictly above every exit rate keeps the
        // embedded chain aperiodic.
        let big = 1.05 * self.exit.iter().cloned().fold(0.0, f64::max);
        let mut p = vec![1.0 / n as f64; n];
        let mut change = f64::INFINITY;
        for it in 1..=opts.max_iterations {
            let ap = self.adjoint(inc, &p);
            change = 0.0;
            for (pj, d) in p.iter_mut().zip(&ap) {
                let step = d / big;
                *pj += step;
                change = f64::max(change, step.abs());
            }
            if change < opts.power_tol {
                let z: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= z);
                return Ok((p, it));
            }
        }
        Err(Error::NoConvergence {
            method: "power iteration",
            iterations: opts.max_iterations as usize,
            last_change: change,
        })
    }
}

/// Stationary vector of the chain on `states` with the given transitions.
/// Targets outside `states` are ignored.
pub fn solve_chain<F>(states: Vec<State>, transitions: F, opts: &SolverOptions) -> Result<ChainSolution>
where
    F: Fn(&State) -> Result<Vec<(State, f64)>> + Sync + Send,
{
    if states.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if states.len() as u128 > opts.state_cap as u128 {
        return Err(Error::CapExceeded {
            what: "chain states",
            needed: states.len() as u128,
            cap: opts.state_cap,
        });
    }
    let chain = build_chain(states, transitions)?;
    chain.check_irreducible()?;
    let inc = chain.incoming();
    let (prob, iterations) = match opts.solver {
        Solver::Gth => (chain.gth()?, 0),
        Solver::PowerIteration => chain.power(&inc, opts)?,
    };
    let residual = chain.adjoint(&inc, &prob).iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    let max_rate = chain.exit.iter().cloned().fold(0.0, f64::max);
    let bound = RESIDUAL_FACTOR * max_rate;
    if !(residual <= bound) {
        return Err(Error::Residual { residual, bound });
    }
    Ok(ChainSolution {
        states: chain.states,
        prob,
        residual,
        max_rate,
        iterations,
    })
}

/// All states with `n <= n_max`, ordered by `(n, a)`.
pub fn truncated_states(d: usize, n_max: u64, cap: u64) -> Result<Vec<State>> {
    let needed = composition_count(n_max, d + 1);
    if needed > cap as u128 {
        return Err(Error::CapExceeded {
            what: "truncated state set",
            needed,
            cap,
        });
    }
    Ok((0..=n_max).flat_map(|n| compositions(n, d)).collect())
}

/// Exact stationary law of the open chain on `n <= n_max` with its residual.
pub fn solve_truncated(params: &ReactionParams, spec: &TruncationSpec, opts: &SolverOptions) -> Result<ChainSolution> {
    let states = truncated_states(params.d(), spec.n_max, opts.state_cap)?;
    solve_chain(
        states,
        |s| {
            let mut out = Vec::new();
            for_each_rate(params, s.counts(), |r, w| {
                if spec.policy == TruncationPolicy::Reflect
                    && matches!(r, Reaction::Inflow(_))
                    && s.n() == spec.n_max
                {
                    return;
                }
                let mut t = s.counts().to_vec();
                r.apply(&mut t);
                out.push((State::new(t), w));
            });
            Ok(out)
        },
        opts,
    )
}

fn to_distribution(sol: ChainSolution, tail: f64) -> Result<Distribution> {
    Distribution::from_weights(sol.states.into_iter().zip(sol.prob), tail)
}

/// Exact stationary law of the open chain truncated as in `spec`, solved by GTH.
/// The recorded tail mass is the Poisson mass of the total count beyond `n_max`.
pub fn stationary_truncated(params: &ReactionParams, spec: &TruncationSpec) -> Result<Distribution> {
    stationary_truncated_with(params, spec, &SolverOptions::default())
}

pub fn stationary_truncated_with(
    params: &ReactionParams,
    spec: &TruncationSpec,
    opts: &SolverOptions,
) -> Result<Distribution> {
    let sol = solve_truncated(params, spec, opts)?;
    to_distribution(sol, poisson_tail(params.mean_total(), spec.n_max))
}

/// Exact stationary law of the Moran chain with `n` individuals.
pub fn moran_stationary_exact(mp: &MoranParams) -> Result<Distribution> {
    moran_stationary_exact_with(mp, &SolverOptions::default())
}

pub fn moran_stationary_exact_with(mp: &MoranParams, opts: &SolverOptions) -> Result<Distribution> {
    let needed = composition_count(mp.n(), mp.d());
    if needed > opts.state_cap as u128 {
        return Err(Error::CapExceeded {
            what: "Moran simplex",
            needed,
            cap: opts.state_cap,
        });
    }
    let sol = solve_chain(compositions(mp.n(), mp.d()), |s| moran_transitions(mp, s), opts)?;
    to_distribution(sol, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssa::tv_distance;
    use crate::stationary::{build_distribution_nmax, log_moran_pi, DEFAULT_STATE_CAP as PI_CAP};

    fn p2(k: [f64; 2], l: [f64; 2], d: f64) -> ReactionParams {
        ReactionParams::new(k.to_vec(), l.to_vec(), d).unwrap()
    }

    fn moran_closed(mp: &MoranParams) -> Distribution {
        let states = compositions(mp.n(), mp.d());
        let w = states
            .iter()
            .map(|s| (s.clone(), log_moran_pi(mp.n(), &mp.alpha(), mp.kappa(), s).unwrap()));
        Distribution::from_log_weights(w, 0.0).unwrap()
    }

    #[test]
    fn symmetric_open_chain_matches_product_form() {
        let params = p2([1.0, 1.0], [2.0, 2.0], 1.0);
        let spec = TruncationSpec::new(30);
        let exact = stationary_truncated(&params, &spec).unwrap();
        let closed = build_distribution_nmax(&params, 30, PI_CAP).unwrap();
        assert!(tv_distance(&exact, &closed) <= 1e-6);
        assert!(exact.truncation_tail_mass() < 1e-12);
    }

    #[test]
    fn fast_outflow_empties_the_system() {
        let params = p2([1.0, 1.0], [0.01, 0.01], 10.0);
        let d = stationary_truncated(&params, &TruncationSpec::new(5)).unwrap();
        assert!(d.prob(&State::d2(0, 0)) > 0.99);
    }

    #[test]
    fn boundary_policies_coincide() {
        let params = p2([0.3, 0.6], [1.0, 0.5], 0.2);
        let drop = stationary_truncated(&params, &TruncationSpec::new(20)).unwrap();
        let reflect = stationary_truncated(
            &params,
            &TruncationSpec {
                n_max: 20,
                policy: TruncationPolicy::Reflect,
            },
        )
        .unwrap();
        assert_eq!(drop, reflect);
    }

    #[test]
    fn total_count_is_truncated_poisson() {
        let params = p2([0.2, 0.9], [1.5, 0.5], 0.5);
        let n_max = 15;
        let d = stationary_truncated(&params, &TruncationSpec::new(n_max)).unwrap();
        let mu: f64 = 4.0;
        let z: f64 = (0..=n_max).map(|n| crate::stationary::log_poisson_nu(mu, n).exp()).sum();
        for (n, p) in d.total_count_marginal() {
            let want = crate::stationary::log_poisson_nu(mu, n).exp() / z;
            assert!((p - want).abs() <= 1e-12, "n = {n}: {p} vs {want}");
        }
    }

    #[test]
    fn power_iteration_agrees_with_elimination() {
        let params = p2([0.5, 0.8], [1.0, 1.0], 0.7);
        let spec = TruncationSpec::new(14);
        let gth = stationary_truncated(&params, &spec).unwrap();
        let opts = SolverOptions {
            solver: Solver::PowerIteration,
            ..SolverOptions::default()
        };
        let pow = stationary_truncated_with(&params, &spec, &opts).unwrap();
        assert!(tv_distance(&gth, &pow) < 1e-9);
    }

    #[test]
    fn doubling_the_truncation_moves_little() {
        let params = p2([0.4, 0.5], [1.0, 1.5], 0.5);
        let small = stationary_truncated(&params, &TruncationSpec::new(12)).unwrap();
        let big = stationary_truncated(&params, &TruncationSpec::new(24)).unwrap();
        assert!(tv_distance(&small, &big) <= 10.0 * poisson_tail(5.0, 12));
    }

    #[test]
    fn caps_are_enforced() {
        let params = p2([1.0, 1.0], [1.0, 1.0], 1.0);
        assert!(matches!(
            stationary_truncated(&params, &TruncationSpec::new(1000)),
            Err(Error::CapExceeded { .. })
        ));
        let mp = MoranParams::new(200, vec![1.0; 4], 1.0, vec![0.25; 4]).unwrap();
        assert!(matches!(moran_stationary_exact(&mp), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn reducible_chains_are_rejected() {
        // Type 2 is never produced by mutation, so (n, 0) is absorbing.
        let mp = MoranParams::new(4, vec![1.0, 1.0], 0.5, vec![1.0, 0.0]).unwrap();
        assert!(matches!(moran_stationary_exact(&mp), Err(Error::Reducible(_))));
    }

    #[test]
    fn neutral_moran_is_dirichlet_multinomial() {
        let mp = MoranParams::new(12, vec![0.7, 0.7, 0.7], 0.4, vec![0.2, 0.5, 0.3]).unwrap();
        let exact = moran_stationary_exact(&mp).unwrap();
        let alpha = mp.alpha();
        let dm = Distribution::from_log_weights(
            compositions(12, 3).into_iter().map(|s| {
                let l = crate::stationary::log_dirmult(12, &alpha, &s).unwrap();
                (s, l)
            }),
            0.0,
        )
        .unwrap();
        assert!(tv_distance(&exact, &dm) < 1e-10);
    }

    #[test]
    fn single_individual_follows_mutation_targets() {
        let mp = MoranParams::new(1, vec![1.0, 3.0, 2.0], 0.8, vec![0.5, 0.3, 0.2]).unwrap();
        let exact = moran_stationary_exact(&mp).unwrap();
        for (i, &p) in mp.p().iter().enumerate() {
            let mut c = vec![0; 3];
            c[i] = 1;
            assert!((exact.prob(&State::new(c)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn selective_moran_matches_closed_form() {
        let mp = MoranParams::new(10, vec![1.0, 2.0], 0.5, vec![0.5, 0.5]).unwrap();
        let exact = moran_stationary_exact(&mp).unwrap();
        assert!(tv_distance(&exact, &moran_closed(&mp)) < 1e-10);
    }
}
