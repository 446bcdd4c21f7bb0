//! Closed-form stationary and approximate-stationary laws.
//!
//! The approximation studied here is the product
//! `Pi~(a) = nu(n) pi~_n(a)` of the Poisson law `nu` of the total count `n` and
//! a selection-weighted Dirichlet-multinomial law `pi~_n` on the hyperplane
//! `E_n`:
//!
//! ```text
//! pi~_n(a) = kappa^a C(n, a) prod_i (alpha_i)_{a_i} / ((|alpha|)_n u(alpha, kappa, n))
//! ```
//!
//! with `alpha_i = delta lambda_i / (kappa_i sum_j lambda_j)` and the partition
//! function `u`. When all `kappa_i` agree the weights cancel and `Pi~` is the
//! exact stationary law.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Distribution, ReactionParams, ScaledParams, State};
use crate::par;
use crate::specfun::{
    cmp_log, hyp2f1_terminating_ext, ln_gamma, log_beta, log_binomial, log_factorial, log_sum_exp,
    ExtFloat,
};

/// Default cap on the number of compositions summed for the partition function.
pub const DEFAULT_COMPOSITION_CAP: u64 = 2_000_000;
/// Default cap on the number of states materialised by [`build_distribution`].
pub const DEFAULT_STATE_CAP: u64 = 20_000_000;

/// `ln nu(n)` for the Poisson law with mean `mu`.
pub fn log_poisson_nu(mu: f64, n: u64) -> f64 {
    if n == 0 {
        -mu
    } else {
        n as f64 * mu.ln() - mu - log_factorial(n)
    }
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("Dirichlet parameters must be positive, got {alpha:?}")))
    }
}

fn check_state(n: u64, d: usize, a: &State) -> Result<()> {
    if a.dim() != d {
        return Err(Error::Precondition(format!("state {a} has {} species, expected {d}", a.dim())));
    }
    if a.n() != n {
        return Err(Error::Precondition(format!("state {a} does not lie on the hyperplane n = {n}")));
    }
    Ok(())
}

/// `ln` of the Dirichlet-multinomial probability of `a` given `n` and `alpha`.
pub fn log_dirmult(n: u64, alpha: &[f64], a: &State) -> Result<f64> {
    check_alpha(alpha)?;
    check_state(n, alpha.len(), a)?;
    Ok(log_dirmult_unchecked(n, alpha, a.counts()))
}

fn log_dirmult_unchecked(n: u64, alpha: &[f64], a: &[u64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let mut acc = log_factorial(n) + ln_gamma(total) - ln_gamma(n as f64 + total);
    for (&ai, &al) in a.iter().zip(alpha) {
        acc += log_rising(al, ai) - log_factorial(ai);
    }
    acc
}

/// `ln (x)_k` for `x > 0`.
fn log_rising(x: f64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        ln_gamma(x + k as f64) - ln_gamma(x)
    }
}

/// Unnormalised log-weight `sum a_i ln kappa_i + ln C(n, a) + sum ln (alpha_i)_{a_i}`.
fn log_weight(log_kappa: &[f64], alpha: &[f64], a: &[u64]) -> f64 {
    let n: u64 = a.iter().sum();
    let mut acc = log_factorial(n);
    for i in 0..a.len() {
        acc += a[i] as f64 * log_kappa[i] + log_rising(alpha[i], a[i]) - log_factorial(a[i]);
    }
    acc
}

/// Number of compositions of `n` into `d` non-negative parts, `C(n+d-1, d-1)`.
pub fn composition_count(n: u64, d: usize) -> u128 {
    let mut c: u128 = 1;
    for j in 1..d as u128 {
        c = c * (n as u128 + j) / j;
    }
    c
}

/// All compositions of `n` into `d` parts in lexicographic order.
pub fn compositions(n: u64, d: usize) -> Vec<State> {
    fn rec(prefix: &mut Vec<u64>, remaining: u64, slots: usize, out: &mut Vec<State>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(State::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            rec(prefix, remaining - k, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    rec(&mut Vec::with_capacity(d), n, d, &mut out);
    out
}

/// `ln u` by explicit summation over all compositions of `n`.
pub fn log_partition_u_compositions(alpha: &[f64], kappa: &[f64], n: u64, cap: u64) -> Result<f64> {
    check_alpha(alpha)?;
    let d = alpha.len();
    let count = composition_count(n, d);
    if count > cap as u128 {
        return Err(Error::CapExceeded {
            what: "partition-function composition sum",
            needed: count,
            cap,
        });
    }
    let log_kappa: Vec<f64> = kappa.iter().map(|k| k.ln()).collect();
    let logs: Vec<f64> = compositions(n, d)
        .iter()
        .map(|b| log_weight(&log_kappa, alpha, b.counts()))
        .collect();
    let total: f64 = alpha.iter().sum();
    Ok(log_sum_exp(&logs) - log_rising(total, n))
}

/// `ln u` for two species through the terminating `2F1`; the species are
/// relabelled internally so the argument `kappa_1 / kappa_2` is at most one.
pub fn log_partition_u_hyp2f1(alpha: &[f64], kappa: &[f64], n: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha.len() != 2 || kappa.len() != 2 {
        return Err(Error::Precondition("the hypergeometric form needs two species".into()));
    }
    let (a1, a2, k1, k2) = if kappa[0] <= kappa[1] {
        (alpha[0], alpha[1], kappa[0], kappa[1])
    } else {
        (alpha[1], alpha[0], kappa[1], kappa[0])
    };
    let e = ExtFloat::from_f64;
    let y = ExtFloat::ONE - e(a2) - ExtFloat::from_u64(n);
    let f = hyp2f1_terminating_ext(n, e(a1), y, e(k1) / e(k2))?;
    if f.signum() <= 0 {
        return Err(Error::domain("log_partition_u", "hypergeometric normaliser is not positive"));
    }
    let total = a1 + a2;
    Ok(-log_rising(total, n) + log_rising(a2, n) + n as f64 * k2.ln() + f.ln_abs())
}

/// `ln u(alpha, kappa, n)`, the normaliser of the selection-weighted law.
///
/// Neutral rates give `n ln kappa` exactly; two species use the hypergeometric
/// form; otherwise the composition sum runs up to [`DEFAULT_COMPOSITION_CAP`].
pub fn log_partition_u(alpha: &[f64], kappa: &[f64], n: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha.len() != kappa.len() {
        return Err(Error::InvalidParams("alpha and kappa differ in length".into()));
    }
    if kappa.iter().all(|&k| k == kappa[0]) {
        return Ok(n as f64 * kappa[0].ln());
    }
    if alpha.len() == 2 {
        match log_partition_u_hyp2f1(alpha, kappa, n) {
            Ok(v) => return Ok(v),
            Err(Error::Domain { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    log_partition_u_compositions(alpha, kappa, n, DEFAULT_COMPOSITION_CAP)
}

/// `ln pi_n(a)` for the Moran chain with genic selection.
pub fn log_moran_pi(n: u64, alpha: &[f64], kappa: &[f64], a: &State) -> Result<f64> {
    let dm = log_dirmult(n, alpha, a)?;
    if kappa.len() != alpha.len() {
        return Err(Error::InvalidParams("alpha and kappa differ in length".into()));
    }
    if kappa.iter().all(|&k| k == kappa[0]) {
        return Ok(dm);
    }
    let sel: f64 = a.counts().iter().zip(kappa).map(|(&c, k)| c as f64 * k.ln()).sum();
    Ok(sel + dm - log_partition_u(alpha, kappa, n)?)
}

/// `ln Pi~(a) = ln nu(n) + ln pi~_n(a)`.
pub fn log_tilde_pi(params: &ReactionParams, a: &State) -> Result<f64> {
    if a.dim() != params.d() {
        return Err(Error::Precondition(format!("state {a} has the wrong number of species")));
    }
    let n = a.n();
    Ok(log_poisson_nu(params.mean_total(), n) + log_moran_pi(n, &params.alpha(), params.kappa(), a)?)
}

/// `ln pi~_n(i, n - i)` for two species via the hypergeometric normaliser.
///
/// Labels are exchanged internally when `kappa_1 > kappa_2`; the returned value
/// always refers to the caller's labelling.
pub fn log_tilde_pi_d2(params: &ReactionParams, n: u64, i: u64) -> Result<f64> {
    params.require_d2("log_tilde_pi_d2")?;
    if i > n {
        return Err(Error::Precondition(format!("index i = {i} exceeds n = {n}")));
    }
    let (p, swapped) = params.canonical_d2()?;
    let i = if swapped { n - i } else { i };
    let alpha = p.alpha();
    let (k1, k2) = (p.kappa()[0], p.kappa()[1]);
    let r = ExtFloat::from_f64(k1) / ExtFloat::from_f64(k2);
    let y = ExtFloat::ONE - ExtFloat::from_f64(alpha[1]) - ExtFloat::from_u64(n);
    let f = hyp2f1_terminating_ext(n, ExtFloat::from_f64(alpha[0]), y, r)?;
    Ok(i as f64 * (k1.ln() - k2.ln()) + log_binomial(n, i) + log_rising(alpha[0], i)
        + log_rising(alpha[1], n - i)
        - log_rising(alpha[1], n)
        - f.ln_abs())
}

/// `ln pi~_n(i, n - i)` written as a weighted Beta-binomial law in the scaled
/// parametrisation and normalised by direct summation over the hyperplane.
pub fn log_tilde_pi_beta_binomial(sp: &ScaledParams, n: u64, i: u64) -> Result<f64> {
    if sp.d() != 2 {
        return Err(Error::Precondition("the Beta-binomial form needs two species".into()));
    }
    if i > n {
        return Err(Error::Precondition(format!("index i = {i} exceeds n = {n}")));
    }
    let alpha = sp.alpha();
    let log_r = sp.kappa_prime()[0].ln() - sp.kappa_prime()[1].ln();
    let weight = |j: u64| -> Result<f64> {
        Ok(j as f64 * log_r + log_binomial(n, j) + log_beta(j as f64 + alpha[0], (n - j) as f64 + alpha[1])?)
    };
    let all: Vec<f64> = (0..=n).map(weight).collect::<Result<_>>()?;
    Ok(all[i as usize] - log_sum_exp(&all))
}

/// Normalised `ln pi~_n(i, n - i)` for every `i = 0..=n` (two species).
pub fn plane_profile_d2(params: &ReactionParams, n: u64) -> Result<Vec<f64>> {
    params.require_d2("plane_profile_d2")?;
    let alpha = params.alpha();
    let log_kappa: Vec<f64> = params.kappa().iter().map(|k| k.ln()).collect();
    let mut w: Vec<f64> = (0..=n)
        .map(|i| log_weight(&log_kappa, &alpha, &[i, n - i]))
        .collect();
    let z = log_sum_exp(&w);
    for x in &mut w {
        *x -= z;
    }
    Ok(w)
}

/// `alpha_i = delta lambda_i / (kappa_i sum_j lambda_j)` in extended precision.
pub fn alpha_ext(params: &ReactionParams) -> Vec<ExtFloat> {
    let total: ExtFloat = params.lambda().iter().map(|&l| ExtFloat::from_f64(l)).sum();
    params
        .kappa()
        .iter()
        .zip(params.lambda())
        .map(|(&k, &l)| ExtFloat::from_f64(params.delta()) * ExtFloat::from_f64(l) / (ExtFloat::from_f64(k) * total))
        .collect()
}

/// Extended-precision values of `pi~_m(i, m - i)` on a band of hyperplanes of
/// a two-species network.
///
/// Built from the exact ratio of consecutive weights along each hyperplane, so
/// the values keep roughly 30 significant digits. The balance functional is a
/// small difference of large flows and needs this accuracy.
#[derive(Clone, Debug)]
pub struct TildePiD2 {
    n_lo: u64,
    planes: Vec<Vec<ExtFloat>>,
}

impl TildePiD2 {
    /// Hyperplanes `0..=n_max`.
    pub fn new(params: &ReactionParams, n_max: u64) -> Result<TildePiD2> {
        TildePiD2::band(params, 0, n_max)
    }

    /// Hyperplanes `n_lo..=n_hi`.
    pub fn band(params: &ReactionParams, n_lo: u64, n_hi: u64) -> Result<TildePiD2> {
        params.require_d2("TildePiD2")?;
        let al = alpha_ext(params);
        let alpha = [al[0], al[1]];
        let r = ExtFloat::from_f64(params.kappa()[0]) / ExtFloat::from_f64(params.kappa()[1]);
        let planes = par::map_range((n_hi - n_lo + 1) as usize, |k| Self::plane(alpha, r, n_lo + k as u64));
        Ok(TildePiD2 { n_lo, planes })
    }

    fn plane(alpha: [ExtFloat; 2], r: ExtFloat, n: u64) -> Vec<ExtFloat> {
        let mut w = Vec::with_capacity(n as usize + 1);
        let mut cur = ExtFloat::ONE;
        w.push(cur);
        for i in 0..n {
            let num = r * ExtFloat::from_u64(n - i) * (alpha[0] + ExtFloat::from_u64(i));
            let den = ExtFloat::from_u64(i + 1) * (alpha[1] + ExtFloat::from_u64(n - 1 - i));
            cur = cur * num / den;
            w.push(cur);
        }
        let z: ExtFloat = w.iter().copied().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// `pi~_n(a)`; zero for states with a negative coordinate (`a = None`).
    pub fn prob(&self, a: Option<(u64, u64)>) -> ExtFloat {
        match a {
            None => ExtFloat::ZERO,
            Some((a1, a2)) => {
                let n = a1 + a2;
                assert!(
                    n >= self.n_lo && ((n - self.n_lo) as usize) < self.planes.len(),
                    "hyperplane {n} outside the precomputed band"
                );
                self.planes[(n - self.n_lo) as usize][a1 as usize]
            }
        }
    }
}

/// Which side of `DV = d` the scaled parameters fall on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// `DV < d`: mass piles up on the boundary states with one species absent.
    BoundaryBimodal,
    /// `DV = d`: neutral conditional law is uniform on each hyperplane.
    Flat,
    /// `DV > d`: a single interior mode.
    InteriorUnimodal,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::BoundaryBimodal => "BOUNDARY_BIMODAL",
            Regime::Flat => "FLAT",
            Regime::InteriorUnimodal => "INTERIOR_UNIMODAL",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeLabel {
    pub value: Regime,
    pub dv: f64,
    pub d: usize,
    /// `DV` is within `1e-12` relative of `d` but not exactly equal to it
    /// (typically because of decimal inputs such as `0.01`). Such cases are
    /// reported as [`Regime::Flat`].
    pub near_tie: bool,
}

/// Relative band around `DV = d` that is reported as flat.
pub const FLAT_TOLERANCE: f64 = 1e-12;

/// Classifies `DV` against `d`. The product is formed exactly (with an FMA error
/// term) so the comparison reflects the inputs, not a rounded product.
pub fn regime_classify(sp: &ScaledParams) -> RegimeLabel {
    let (dd, v) = (sp.flow(), sp.volume());
    let p = dd * v;
    let e = dd.mul_add(v, -p);
    let d = sp.d();
    let df = d as f64;
    let exact_sign = if p > df {
        1
    } else if p < df {
        -1
    } else if e > 0.0 {
        1
    } else if e < 0.0 {
        -1
    } else {
        0
    };
    let near = ((p - df) + e).abs() <= FLAT_TOLERANCE * df;
    let value = if exact_sign == 0 || near {
        Regime::Flat
    } else if exact_sign < 0 {
        Regime::BoundaryBimodal
    } else {
        Regime::InteriorUnimodal
    };
    RegimeLabel {
        value,
        dv: p,
        d,
        near_tie: near && exact_sign != 0,
    }
}

/// Largest `n` kept when truncating the Poisson law `nu` with mean `mu` so the
/// omitted upper tail is below `tail_tol`, together with that tail's mass.
///
/// The cut-off comes from the Chernoff bound `P(N >= k) <= e^-mu (e mu / k)^k`;
/// the exact tail mass is then summed and checked against the tolerance.
pub fn poisson_truncation(mu: f64, tail_tol: f64) -> Result<(u64, f64)> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::InvalidParams(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParams(format!("Poisson mean must be positive, got {mu}")));
    }
    let log_tol = tail_tol.ln();
    let mut k = mu.floor() as u64 + 1;
    loop {
        let kf = k as f64;
        let bound = -mu + kf * (1.0 + mu.ln() - kf.ln());
        if bound < log_tol {
            break;
        }
        k += 1;
    }
    let n_max = k - 1;
    let tail = poisson_tail(mu, n_max);
    debug_assert!(tail < tail_tol, "Chernoff cut-off violated: tail {tail} >= {tail_tol}");
    Ok((n_max, tail))
}

/// `P(N > n_max)` for `N ~ Poisson(mu)`, by summing the pmf above `n_max`.
pub fn poisson_tail(mu: f64, n_max: u64) -> f64 {
    let mut total = 0.0;
    let mut n = n_max + 1;
    loop {
        let t = log_poisson_nu(mu, n).exp();
        total += t;
        if (n as f64 > mu && t <= total * 1e-17) || t == 0.0 && n as f64 > mu {
            break;
        }
        n += 1;
    }
    total
}

/// `Pi~` on all states with `n <= n_max`, renormalised, with the omitted
/// Poisson tail recorded.
pub fn build_distribution_nmax(params: &ReactionParams, n_max: u64, state_cap: u64) -> Result<Distribution> {
    let d = params.d();
    let count = composition_count(n_max, d + 1);
    if count > state_cap as u128 {
        return Err(Error::CapExceeded {
            what: "materialised distribution",
            needed: count,
            cap: state_cap,
        });
    }
    let mu = params.mean_total();
    let alpha = params.alpha();
    let log_kappa: Vec<f64> = params.kappa().iter().map(|k| k.ln()).collect();
    let planes = par::map_range(n_max as usize + 1, |m| {
        let m = m as u64;
        let states = compositions(m, d);
        let mut w: Vec<f64> = states
            .iter()
            .map(|b| log_weight(&log_kappa, &alpha, b.counts()))
            .collect();
        let z = log_sum_exp(&w) - log_poisson_nu(mu, m);
        for x in &mut w {
            *x -= z;
        }
        states.into_iter().zip(w).collect::<Vec<_>>()
    });
    Distribution::from_log_weights(planes.into_iter().flatten(), poisson_tail(mu, n_max))
}

/// [`build_distribution_nmax`] with `n_max` chosen from `tail_tol`.
pub fn build_distribution(params: &ReactionParams, tail_tol: f64) -> Result<Distribution> {
    let (n_max, _) = poisson_truncation(params.mean_total(), tail_tol)?;
    build_distribution_nmax(params, n_max, DEFAULT_STATE_CAP)
}

/// One-step neighbours used for mode detection: `+-e_i` and `e_i - e_j`.
fn neighbours(a: &State) -> Vec<State> {
    let d = a.dim();
    let mut out = Vec::new();
    for i in 0..d {
        out.extend(a.shifted(Some(i), None));
        out.extend(a.shifted(None, Some(i)));
        for j in 0..d {
            if i != j {
                out.extend(a.shifted(Some(i), Some(j)));
            }
        }
    }
    out
}

/// Local maxima of `dist` under the one-step neighbourhood, in state order.
/// States tied with a neighbour are all reported.
pub fn distribution_modes(dist: &Distribution) -> Vec<State> {
    let states: Vec<(&State, f64)> = dist.iter().collect();
    let flags = par::map_slice(&states, |(s, l)| {
        neighbours(s).iter().all(|b| dist.log_prob(b) <= *l)
    });
    states
        .into_iter()
        .zip(flags)
        .filter(|(_, keep)| *keep)
        .map(|((s, _), _)| s.clone())
        .collect()
}

/// `ln Pi~` on the lattice `{(i, n - i) : n_lo <= n <= n_hi}` of a two-species
/// network, one vector per hyperplane.
pub fn lattice_log_tilde_pi_d2(params: &ReactionParams, n_lo: u64, n_hi: u64) -> Result<Vec<Vec<f64>>> {
    params.require_d2("lattice_log_tilde_pi_d2")?;
    let mu = params.mean_total();
    par::try_map_range((n_hi - n_lo + 1) as usize, |k| {
        let n = n_lo + k as u64;
        let mut prof = plane_profile_d2(params, n)?;
        let ln_nu = log_poisson_nu(mu, n);
        for x in &mut prof {
            *x += ln_nu;
        }
        Ok(prof)
    })
}

/// Modes of `Pi~` for a two-species network without materialising a
/// [`Distribution`]: the hyperplanes inside the Poisson window for `tail_tol`
/// are scanned in parallel, which keeps the `DV > d` regime (tens of millions of
/// states) tractable.
pub fn modes_d2(params: &ReactionParams, tail_tol: f64) -> Result<Vec<(State, f64)>> {
    params.require_d2("modes_d2")?;
    let mu = params.mean_total();
    let (n_max, _) = poisson_truncation(mu, tail_tol)?;
    let lattice = lattice_log_tilde_pi_d2(params, 0, n_max)?;
    let get = |n: i64, i: i64| -> f64 {
        if n < 0 || n as u64 > n_max || i < 0 || i > n {
            f64::NEG_INFINITY
        } else {
            lattice[n as usize][i as usize]
        }
    };
    let found = par::map_range(n_max as usize + 1, |n| {
        let n = n as i64;
        let mut local = Vec::new();
        for i in 0..=n {
            let v = get(n, i);
            // +-e_1, +-e_2, e_1 - e_2, e_2 - e_1 expressed as (n, i) offsets
            let nb = [
                get(n + 1, i + 1),
                get(n - 1, i - 1),
                get(n + 1, i),
                get(n - 1, i),
                get(n, i + 1),
                get(n, i - 1),
            ];
            if nb.iter().all(|&b| b <= v) {
                local.push((State::d2(i as u64, (n - i) as u64), v));
            }
        }
        local
    });
    Ok(found.into_iter().flatten().collect())
}

/// Global maximiser of `ln Pi~` over the states with `n <= n_max` (two species).
pub fn argmax_d2(params: &ReactionParams, n_max: u64) -> Result<(State, f64)> {
    let lattice = lattice_log_tilde_pi_d2(params, 0, n_max)?;
    let mut best = (State::d2(0, 0), f64::NEG_INFINITY);
    for (n, plane) in lattice.iter().enumerate() {
        for (i, &v) in plane.iter().enumerate() {
            if cmp_log(v, best.1).is_gt() {
                best = (State::d2(i as u64, (n - i) as u64), v);
            }
        }
    }
    Ok(best)
}

/// Probability of the states whose smallest count is at least `min_count`.
pub fn interior_mass(dist: &Distribution, min_count: u64) -> f64 {
    dist.mass_where(|s| s.min_count() >= min_count)
}
