//! The balance functional `B*(a) = (A* Pi~)(a) / Pi~(a)` for two species.
//!
//! `B*` vanishes identically exactly when `Pi~` is stationary, so its size
//! measures how far the product approximation is from the true stationary law.
//! Splitting the flows through `a` by the hyperplane they come from,
//!
//! ```text
//! R_n     = [lambda_1 + lambda_2 + n delta + (kappa_1 + kappa_2) a_1 a_2] pi~_n(a)
//! L_{n-1} = n delta / Lambda  [lambda_1 pi~_{n-1}(a-e_1) + lambda_2 pi~_{n-1}(a-e_2)]
//! L_n     = kappa_2 (a_1+1)(a_2-1) pi~_n(a+e_1-e_2) + kappa_1 (a_1-1)(a_2+1) pi~_n(a-e_1+e_2)
//! L_{n+1} = Lambda / (n+1) [(a_1+1) pi~_{n+1}(a+e_1) + (a_2+1) pi~_{n+1}(a+e_2)]
//! ```
//!
//! and `B* = (L_{n-1} + L_n + L_{n+1} - R_n) / pi~_n(a)`, where `Lambda = lambda_1 + lambda_2`.
//! [`bstar_direct`] sums these flows; [`bstar_closed_form`] uses the reduction to
//! ratios of terminating `2F1` polynomials.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ReactionParams, ScaledParams, State};
use crate::par;
use crate::specfun::{hyp2f1_terminating_ext, ExtFloat};
use crate::stationary::{alpha_ext, TildePiD2};

/// Relative tolerance used when comparing balance evaluations.
pub const REL_TOL: f64 = 1e-8;
/// Absolute floor for balance comparisons; `B*` legitimately approaches zero.
pub const ABS_FLOOR: f64 = 1e-12;

/// `|x - y| <= max(rel * max(|x|, |y|), abs_floor)`.
pub fn agrees(x: f64, y: f64, rel: f64, abs_floor: f64) -> bool {
    (x - y).abs() <= (rel * x.abs().max(y.abs())).max(abs_floor)
}

/// Flow terms through a state, each divided by `pi~_n(a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BalanceTerms {
    pub r_n: f64,
    pub l_nm1: f64,
    pub l_n: f64,
    pub l_np1: f64,
    /// `l_nm1 + l_n + l_np1 - r_n` formed in extended precision.
    pub bstar: f64,
    /// The same combination formed from the rounded terms in double precision.
    pub bstar_naive: f64,
}

fn e(x: f64) -> ExtFloat {
    ExtFloat::from_f64(x)
}

fn u(x: u64) -> ExtFloat {
    ExtFloat::from_u64(x)
}

fn state_d2(a: &State) -> Result<(u64, u64)> {
    if a.dim() != 2 {
        return Err(Error::Precondition(format!("state {a} must have two species")));
    }
    Ok((a.get(0), a.get(1)))
}

fn direct_with(params: &ReactionParams, table: &TildePiD2, a1: u64, a2: u64) -> BalanceTerms {
    let n = a1 + a2;
    let (k1, k2) = (e(params.kappa()[0]), e(params.kappa()[1]));
    let (l1, l2) = (e(params.lambda()[0]), e(params.lambda()[1]));
    let delta = e(params.delta());
    let big_l = l1 + l2;
    let here = table.prob(Some((a1, a2)));

    let r_n = big_l + delta * u(n) + (k1 + k2) * u(a1) * u(a2);

    let mut l_nm1 = ExtFloat::ZERO;
    if a1 > 0 {
        l_nm1 = l_nm1 + l1 * table.prob(Some((a1 - 1, a2)));
    }
    if a2 > 0 {
        l_nm1 = l_nm1 + l2 * table.prob(Some((a1, a2 - 1)));
    }
    l_nm1 = l_nm1 * u(n) * delta / big_l / here;

    let mut l_n = ExtFloat::ZERO;
    if a2 > 0 {
        l_n = l_n + k2 * u(a1 + 1) * u(a2 - 1) * table.prob(Some((a1 + 1, a2 - 1)));
    }
    if a1 > 0 {
        l_n = l_n + k1 * u(a1 - 1) * u(a2 + 1) * table.prob(Some((a1 - 1, a2 + 1)));
    }
    l_n = l_n / here;

    let l_np1 = big_l / u(n + 1)
        * (u(a1 + 1) * table.prob(Some((a1 + 1, a2))) + u(a2 + 1) * table.prob(Some((a1, a2 + 1))))
        / here;

    let bstar = l_nm1 + l_n + l_np1 - r_n;
    let (r, m, z, p) = (r_n.to_f64(), l_nm1.to_f64(), l_n.to_f64(), l_np1.to_f64());
    BalanceTerms {
        r_n: r,
        l_nm1: m,
        l_n: z,
        l_np1: p,
        bstar: bstar.to_f64(),
        bstar_naive: m + z + p - r,
    }
}

/// `B*(a)` by direct summation of the flows through `a`.
pub fn bstar_direct(params: &ReactionParams, a: &State) -> Result<BalanceTerms> {
    params.require_d2("bstar_direct")?;
    let (a1, a2) = state_d2(a)?;
    let n = a1 + a2;
    let table = TildePiD2::band(params, n.saturating_sub(1), n + 1)?;
    Ok(direct_with(params, &table, a1, a2))
}

/// Inputs of the closed form in the canonical labelling `kappa_1 <= kappa_2`.
struct ClosedInputs {
    k1: ExtFloat,
    k2: ExtFloat,
    alpha1: ExtFloat,
    alpha2: ExtFloat,
    big_l: ExtFloat,
    r: ExtFloat,
}

/// `2F1(-m, alpha_1; 1 - alpha_2 - m; r)` for `m = n - 1, n, n + 1`.
struct HypTriple {
    minus: Option<ExtFloat>,
    mid: ExtFloat,
    plus: ExtFloat,
}

fn hyp_triple(alpha1: ExtFloat, alpha2: ExtFloat, r: ExtFloat, n: u64) -> Result<HypTriple> {
    let f = |m: u64| hyp2f1_terminating_ext(m, alpha1, ExtFloat::ONE - alpha2 - u(m), r);
    Ok(HypTriple {
        minus: if n == 0 { None } else { Some(f(n - 1)?) },
        mid: f(n)?,
        plus: f(n + 1)?,
    })
}

fn closed_core(c: &ClosedInputs, a1: u64, a2: u64) -> Result<ExtFloat> {
    let n = a1 + a2;
    let h = hyp_triple(c.alpha1, c.alpha2, c.r, n)?;
    let s = |ai: u64, al: ExtFloat| {
        if ai == 0 {
            ExtFloat::ZERO
        } else {
            u(ai) * al / (u(ai - 1) + al)
        }
    };
    let s1 = s(a1, c.alpha1);
    let s2 = s(a2, c.alpha2);
    let big_s = s1 + s2;
    // 1 - rho_p and rho_m - 1 are formed from differences of the polynomials
    // themselves so no digits are lost when the ratios are close to one.
    let rho_p = h.mid / h.plus;
    let one_minus_rho_p = (h.plus - h.mid) / h.plus;
    let rho_m_minus_one = match h.minus {
        Some(fm) => (h.mid - fm) / fm,
        None => ExtFloat::ZERO,
    };
    let n_e = u(n);
    let dk = c.k2 - c.k1;
    let a1e = u(a1);
    let t_inflow = -(c.big_l * one_minus_rho_p);
    let t_lower = if big_s.is_zero() {
        ExtFloat::ZERO
    } else {
        c.k2 * (n_e - ExtFloat::ONE + c.alpha2) * big_s * rho_m_minus_one
    };
    let t_upper = c.big_l * rho_p * (a1e * (c.r - ExtFloat::ONE) + c.r * c.alpha1) / (n_e + c.alpha2);
    let t_same = a1e * c.alpha1 * dk - c.k2 * c.alpha1 * s1 + s2 * (a1e * dk - c.k1 * c.alpha1);
    Ok(t_inflow + t_lower + t_upper + t_same)
}

/// `B*(a)` from the closed form in terms of `2F1` ratios.
///
/// Species are relabelled internally so that `kappa_1 <= kappa_2`; equal rates
/// short-circuit to exactly zero.
pub fn bstar_closed_form(params: &ReactionParams, a: &State) -> Result<f64> {
    params.require_d2("bstar_closed_form")?;
    let (a1, a2) = state_d2(a)?;
    if params.is_neutral() {
        return Ok(0.0);
    }
    let (p, swapped) = params.canonical_d2()?;
    let (a1, a2) = if swapped { (a2, a1) } else { (a1, a2) };
    let al = alpha_ext(&p);
    let (k1, k2) = (e(p.kappa()[0]), e(p.kappa()[1]));
    let inputs = ClosedInputs {
        k1,
        k2,
        alpha1: al[0],
        alpha2: al[1],
        big_l: e(p.lambda()[0]) + e(p.lambda()[1]),
        r: k1 / k2,
    };
    Ok(closed_core(&inputs, a1, a2)?.to_f64())
}

/// `B*_V(a)` for scaled parameters, obtained by substituting
/// `kappa_i = kappa'_i / V`, `lambda_i = DV`, `delta = D`, `alpha_i = DV/(d kappa'_i)`
/// into the closed form (the `2F1` argument becomes `kappa'_1 / kappa'_2`).
pub fn bstar_scaled(sp: &ScaledParams, a: &State) -> Result<f64> {
    if sp.d() != 2 {
        return Err(Error::Precondition("bstar_scaled is defined for two species only".into()));
    }
    let (a1, a2) = state_d2(a)?;
    if sp.kappa_prime()[0] == sp.kappa_prime()[1] {
        return Ok(0.0);
    }
    let (sp, a1, a2) = if sp.kappa_prime()[0] > sp.kappa_prime()[1] {
        (sp.swapped()?, a2, a1)
    } else {
        (sp.clone(), a1, a2)
    };
    let v = e(sp.volume());
    let dv = e(sp.flow()) * v;
    let d = u(2);
    let (kp1, kp2) = (e(sp.kappa_prime()[0]), e(sp.kappa_prime()[1]));
    let inputs = ClosedInputs {
        k1: kp1 / v,
        k2: kp2 / v,
        alpha1: dv / (d * kp1),
        alpha2: dv / (d * kp2),
        big_l: d * dv,
        r: kp1 / kp2,
    };
    Ok(closed_core(&inputs, a1, a2)?.to_f64())
}

/// The two `2F1` ratios that enter `B*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HypRatios {
    pub n: u64,
    /// `2F1(-n, a_1; 1-a_2-n; z) / 2F1(1-n, a_1; 2-a_2-n; z)`; absent for `n = 0`,
    /// where the lower hyperplane does not exist.
    pub minus: Option<f64>,
    /// `2F1(-n, a_1; 1-a_2-n; z) / 2F1(-1-n, a_1; -a_2-n; z)`.
    pub plus: f64,
}

/// The `2F1` ratios at total count `n`, in the canonical labelling.
pub fn hyp_ratios(params: &ReactionParams, n: u64) -> Result<HypRatios> {
    let (p, _) = params.canonical_d2()?;
    let al = alpha_ext(&p);
    let r = e(p.kappa()[0]) / e(p.kappa()[1]);
    let h = hyp_triple(al[0], al[1], r, n)?;
    Ok(HypRatios {
        n,
        minus: h.minus.map(|fm| (h.mid / fm).to_f64()),
        plus: (h.mid / h.plus).to_f64(),
    })
}

/// Ratios of `pi~` at the six neighbouring states to `pi~_n(a)`. Entries are
/// `None` when the neighbour has a negative coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShiftRatios {
    /// `pi~_{n-1}(a - e_1) / pi~_n(a)`
    pub down1: Option<f64>,
    /// `pi~_{n-1}(a - e_2) / pi~_n(a)`
    pub down2: Option<f64>,
    /// `pi~_n(a + e_1 - e_2) / pi~_n(a)`
    pub swap12: Option<f64>,
    /// `pi~_n(a - e_1 + e_2) / pi~_n(a)`
    pub swap21: Option<f64>,
    /// `pi~_{n+1}(a + e_1) / pi~_n(a)`
    pub up1: Option<f64>,
    /// `pi~_{n+1}(a + e_2) / pi~_n(a)`
    pub up2: Option<f64>,
}

impl ShiftRatios {
    pub fn as_array(&self) -> [Option<f64>; 6] {
        [self.down1, self.down2, self.swap12, self.swap21, self.up1, self.up2]
    }

    fn relabelled(self) -> ShiftRatios {
        ShiftRatios {
            down1: self.down2,
            down2: self.down1,
            swap12: self.swap21,
            swap21: self.swap12,
            up1: self.up2,
            up2: self.up1,
        }
    }
}

/// The six shift ratios from their closed forms.
pub fn shift_ratios_closed(params: &ReactionParams, a: &State) -> Result<ShiftRatios> {
    let (a1, a2) = state_d2(a)?;
    let (p, swapped) = params.canonical_d2()?;
    let (a1, a2) = if swapped { (a2, a1) } else { (a1, a2) };
    let n = a1 + a2;
    let al = alpha_ext(&p);
    let (al1, al2) = (al[0], al[1]);
    let r = e(p.kappa()[0]) / e(p.kappa()[1]);
    let h = hyp_triple(al1, al2, r, n)?;
    let ne = u(n);
    let one = ExtFloat::ONE;
    let f_down = h.minus.map(|fm| h.mid / fm);
    let f_up = h.mid / h.plus;
    let down1 = match (a1 > 0, f_down) {
        (true, Some(fd)) => Some(u(a1) / ne * (ne - one + al2) / (u(a1 - 1) + al1) / r * fd),
        _ => None,
    };
    let down2 = match (a2 > 0, f_down) {
        (true, Some(fd)) => Some(u(a2) / ne * (ne - one + al2) / (u(a2 - 1) + al2) * fd),
        _ => None,
    };
    let swap12 = (a2 > 0).then(|| u(a2) / u(a1 + 1) * (u(a1) + al1) / (u(a2 - 1) + al2) * r);
    let swap21 = (a1 > 0).then(|| u(a1) / u(a2 + 1) * (u(a2) + al2) / (u(a1 - 1) + al1) / r);
    let up1 = Some(u(n + 1) / u(a1 + 1) * (u(a1) + al1) / (ne + al2) * r * f_up);
    let up2 = Some(u(n + 1) / u(a2 + 1) * (u(a2) + al2) / (ne + al2) * f_up);
    let out = ShiftRatios {
        down1: down1.map(|x| x.to_f64()),
        down2: down2.map(|x| x.to_f64()),
        swap12: swap12.map(|x| x.to_f64()),
        swap21: swap21.map(|x| x.to_f64()),
        up1: up1.map(|x| x.to_f64()),
        up2: up2.map(|x| x.to_f64()),
    };
    Ok(if swapped { out.relabelled() } else { out })
}

/// The six shift ratios by evaluating `pi~` at both states.
pub fn shift_ratios_direct(params: &ReactionParams, a: &State) -> Result<ShiftRatios> {
    params.require_d2("shift_ratios_direct")?;
    let (a1, a2) = state_d2(a)?;
    let n = a1 + a2;
    let t = TildePiD2::band(params, n.saturating_sub(1), n + 1)?;
    let here = t.prob(Some((a1, a2)));
    let ratio = |s: Option<(u64, u64)>| s.map(|s| (t.prob(Some(s)) / here).to_f64());
    Ok(ShiftRatios {
        down1: ratio(a1.checked_sub(1).map(|x| (x, a2))),
        down2: ratio(a2.checked_sub(1).map(|y| (a1, y))),
        swap12: ratio(a2.checked_sub(1).map(|y| (a1 + 1, y))),
        swap21: ratio(a1.checked_sub(1).map(|x| (x, a2 + 1))),
        up1: ratio(Some((a1 + 1, a2))),
        up2: ratio(Some((a1, a2 + 1))),
    })
}

/// One row of a balance sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BalanceRow {
    pub a1: u64,
    pub a2: u64,
    pub n: u64,
    pub bstar_direct: f64,
    pub bstar_closed: f64,
    pub abs_diff: f64,
}

/// All two-species states with `n <= n_max`, ordered by `(n, a_1)`.
pub fn grid_states(n_max: u64) -> Vec<(u64, u64)> {
    (0..=n_max).flat_map(|n| (0..=n).map(move |a1| (a1, n - a1))).collect()
}

/// `B*` by both routes on every state with `n <= n_max`, ordered by `(n, a_1)`.
pub fn balance_grid(params: &ReactionParams, n_max: u64) -> Result<Vec<BalanceRow>> {
    params.require_d2("balance_grid")?;
    let table = TildePiD2::new(params, n_max + 1)?;
    let states = grid_states(n_max);
    let rows = par::map_slice(&states, |&(a1, a2)| -> Result<BalanceRow> {
        let direct = direct_with(params, &table, a1, a2).bstar;
        let closed = bstar_closed_form(params, &State::d2(a1, a2))?;
        Ok(BalanceRow {
            a1,
            a2,
            n: a1 + a2,
            bstar_direct: direct,
            bstar_closed: closed,
            abs_diff: (direct - closed).abs(),
        })
    });
    rows.into_iter().collect()
}

/// `B*` by direct summation on every state with `n <= n_max`, sharing one table.
pub fn bstar_direct_grid(params: &ReactionParams, n_max: u64) -> Result<Vec<((u64, u64), BalanceTerms)>> {
    params.require_d2("bstar_direct_grid")?;
    let table = TildePiD2::new(params, n_max + 1)?;
    let states = grid_states(n_max);
    let terms = par::map_slice(&states, |&(a1, a2)| direct_with(params, &table, a1, a2));
    Ok(states.into_iter().zip(terms).collect())
}

/// `max |B*_V(a)|` over the states with `n <= n_max` accepted by `keep`, with its
/// maximiser.
pub fn max_abs_bstar_scaled(
    sp: &ScaledParams,
    n_max: u64,
    keep: impl Fn(u64, u64) -> bool + Sync + Send,
) -> Result<(f64, (u64, u64))> {
    let states: Vec<(u64, u64)> = grid_states(n_max).into_iter().filter(|&(x, y)| keep(x, y)).collect();
    let vals = par::map_slice(&states, |&(a1, a2)| bstar_scaled(sp, &State::d2(a1, a2)));
    let mut best = (0.0, (0, 0));
    for (s, v) in states.into_iter().zip(vals) {
        let v = v?.abs();
        if v > best.0 {
            best = (v, s);
        }
    }
    Ok(best)
}
