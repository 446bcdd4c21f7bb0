//! Balance functional over the two-species state grid at V = 20.
#![allow(clippy::excessive_precision)]

use autocat::balance::{agrees, bstar_closed_form, bstar_direct, bstar_direct_grid, bstar_scaled, grid_states};
use autocat::model::{ScaledParams, State};
use autocat::stationary::TildePiD2;

fn sp(dd: f64, k2: f64) -> ScaledParams {
    ScaledParams::new(20.0, dd, vec![1.0, k2]).unwrap()
}

/// Reference values from a 40-digit evaluation of the flow sums with the same
/// double-precision inputs.
#[test]
fn reference_values_at_v20() {
    let cases = [
        (1.0001, (5, 5), -5.5529124128970846e-9),
        (1.01, (5, 5), -5.4989691304495524e-5),
        (1.01, (1, 40), -0.0076401275840662186),
        (1.01, (40, 1), 0.010531028732416226),
        (1.01, (0, 40), 0.00082822936046594632),
    ];
    for (k2, (a1, a2), want) in cases {
        let s = sp(0.01, k2);
        let a = State::d2(a1, a2);
        let direct = bstar_direct(&s.to_unscaled(), &a).unwrap().bstar;
        let closed = bstar_closed_form(&s.to_unscaled(), &a).unwrap();
        let scaled = bstar_scaled(&s, &a).unwrap();
        for (name, got) in [("direct", direct), ("closed", closed), ("scaled", scaled)] {
            assert!(agrees(got, want, 1e-9, 0.0), "{name} at {a}, k2' = {k2}: {got} vs {want}");
        }
    }
}

#[test]
fn deviations_shrink_as_the_rates_tie() {
    let maxima: Vec<f64> = [1.1, 1.01, 1.005, 1.0001]
        .iter()
        .map(|&k2| {
            bstar_direct_grid(&sp(0.01, k2).to_unscaled(), 80)
                .unwrap()
                .iter()
                .map(|(_, t)| t.bstar.abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(maxima.windows(2).all(|w| w[0] > w[1]), "{maxima:?}");
}

#[test]
fn large_deviations_sit_next_to_the_boundary() {
    let s = sp(0.01, 1.01);
    let mut vals: Vec<(f64, (u64, u64))> = grid_states(80)
        .into_iter()
        .map(|(a1, a2)| (bstar_scaled(&s, &State::d2(a1, a2)).unwrap().abs(), (a1, a2)))
        .collect();
    vals.sort_by(|x, y| y.0.total_cmp(&x.0));
    // The grid maximum is on the a_2 = 1 edge; (1, 40) is in the top 5%.
    assert_eq!(vals[0].1, (79, 1));
    let rank = vals.iter().position(|v| v.1 == (1, 40)).unwrap();
    assert!(rank < vals.len() / 20, "rank {rank}");
    // Away from both axes the deviation is roughly ten times smaller.
    let interior = vals.iter().filter(|v| v.1 .0.min(v.1 .1) >= 5).map(|v| v.0).fold(0.0, f64::max);
    assert!(interior < 0.15 * vals[0].0, "{interior} vs {}", vals[0].0);
}

#[test]
fn weighted_balance_sums_to_zero() {
    // Summing A* Pi~ over n <= N leaves only the flux across N -> N + 1, which
    // cancels because the total count is exactly Poisson under Pi~.
    for k2 in [1.1, 1.0001] {
        let params = sp(0.01, k2).to_unscaled();
        let n_max = 80;
        let table = TildePiD2::new(&params, n_max).unwrap();
        let mu = params.mean_total();
        let mut sum = 0.0;
        let mut scale = 0.0f64;
        for ((a1, a2), t) in bstar_direct_grid(&params, n_max).unwrap() {
            let n = a1 + a2;
            let nu = autocat::stationary::log_poisson_nu(mu, n).exp();
            let w = nu * table.prob(Some((a1, a2))).to_f64();
            sum += w * t.bstar;
            scale = scale.max(w * t.r_n);
        }
        assert!(sum.abs() <= 1e-12 * scale.max(1e-300) + 1e-15, "k2' = {k2}: {sum}");
    }
}
