//! Deterministic mean-field dynamics for two species and their fixed points.
//!
//! In molecule counts, with `kappa_i = kappa'_i / V`, `lambda_i = DV` and `delta = D`,
//!
//! ```text
//! da_1/dt = (kappa_1 - kappa_2) a_1 a_2 + lambda_1 - delta a_1
//! da_2/dt = (kappa_2 - kappa_1) a_1 a_2 + lambda_2 - delta a_2
//! ```
//!
//! The total `a_1 + a_2` relaxes to `S = (lambda_1 + lambda_2) / delta = dV`, so
//! equilibria lie on that line and solve a quadratic in `a_1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ScaledParams;

/// Equilibrium of the mean-field dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixedPoint {
    pub a_star: (f64, f64),
    /// Both Jacobian eigenvalues have negative real part.
    pub stable: bool,
    /// `max |rhs|` at `a_star`.
    pub residual: f64,
}

/// Rates in molecule counts: `(kappa_1 - kappa_2, lambda_1, lambda_2, delta)`.
fn count_rates(sp: &ScaledParams) -> Result<(f64, f64, f64, f64)> {
    if sp.d() != 2 {
        return Err(Error::Precondition("the mean-field dynamics are implemented for two species".into()));
    }
    let p = sp.to_unscaled();
    Ok((p.kappa()[0] - p.kappa()[1], p.lambda()[0], p.lambda()[1], p.delta()))
}

/// Right-hand side of the mean-field dynamics at `x`.
pub fn ode_rhs(sp: &ScaledParams, x: (f64, f64)) -> Result<(f64, f64)> {
    if !(x.0 >= 0.0 && x.1 >= 0.0) {
        return Err(Error::Precondition(format!("ode_rhs needs non-negative counts, got {x:?}")));
    }
    let (c, l1, l2, delta) = count_rates(sp)?;
    let cross = c * x.0 * x.1;
    Ok((cross + l1 - delta * x.0, -cross + l2 - delta * x.1))
}

/// Jacobian of the dynamics at `x`, row-major.
pub fn jacobian(sp: &ScaledParams, x: (f64, f64)) -> Result<[[f64; 2]; 2]> {
    let (c, _, _, delta) = count_rates(sp)?;
    Ok([[c * x.1 - delta, c * x.0], [-c * x.1, -c * x.0 - delta]])
}

fn is_stable(j: [[f64; 2]; 2]) -> bool {
    // Both eigenvalues of a real 2x2 matrix have negative real part iff
    // trace < 0 and determinant > 0.
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    tr < 0.0 && det > 0.0
}

/// The equilibrium on the line `a_1 + a_2 = S`.
///
/// Solves `c a_1 (S - a_1) + lambda_1 - delta a_1 = 0` with `c = kappa_1 - kappa_2`
/// using the cancellation-free root formula, then applies Newton steps.
pub fn fixed_point(sp: &ScaledParams) -> Result<FixedPoint> {
    let (c, l1, l2, delta) = count_rates(sp)?;
    let s = (l1 + l2) / delta;
    let a1 = if c == 0.0 {
        l1 / delta
    } else {
        // -c a^2 + (cS - delta) a + lambda_1 = 0, i.e. c a^2 + b a - lambda_1 = 0 with b = delta - cS.
        let b = delta - c * s;
        let disc = (b * b + 4.0 * c * l1).max(0.0).sqrt();
        let q = -0.5 * (b + b.signum() * disc);
        let roots = [q / c, -l1 / q];
        let inside = |x: f64| x.is_finite() && (0.0..=s).contains(&x);
        match roots.iter().copied().find(|&x| inside(x)) {
            Some(x) => x,
            None => {
                return Err(Error::NoConvergence {
                    method: "fixed_point quadratic",
                    iterations: 0,
                    last_change: f64::NAN,
                })
            }
        }
    };
    let g = |a: f64| c * a * (s - a) + l1 - delta * a;
    let dg = |a: f64| c * (s - 2.0 * a) - delta;
    let mut a1 = a1;
    for _ in 0..3 {
        let step = g(a1) / dg(a1);
        if !step.is_finite() {
            break;
        }
        let next = (a1 - step).clamp(0.0, s);
        if next == a1 {
            break;
        }
        a1 = next;
    }
    let x = (a1, s - a1);
    let r = ode_rhs(sp, x)?;
    Ok(FixedPoint {
        a_star: x,
        stable: is_stable(jacobian(sp, x)?),
        residual: r.0.abs().max(r.1.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp(v: f64, d: f64, k2: f64) -> ScaledParams {
        ScaledParams::new(v, d, vec![1.0, k2]).unwrap()
    }

    fn rk4(p: &ScaledParams, mut x: (f64, f64), h: f64, steps: usize) -> (f64, f64) {
        let f = |x: (f64, f64)| ode_rhs(p, (x.0.max(0.0), x.1.max(0.0))).unwrap();
        for _ in 0..steps {
            let k1 = f(x);
            let k2 = f((x.0 + 0.5 * h * k1.0, x.1 + 0.5 * h * k1.1));
            let k3 = f((x.0 + 0.5 * h * k2.0, x.1 + 0.5 * h * k2.1));
            let k4 = f((x.0 + h * k3.0, x.1 + h * k3.1));
            x.0 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            x.1 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        x
    }

    #[test]
    fn symmetric_rates_are_linear() {
        let p = sp(50.0, 0.02, 1.0);
        let (l, d) = (0.02 * 50.0, 0.02);
        for x in [(0.0, 0.0), (3.0, 70.0), (50.0, 50.0)] {
            let r = ode_rhs(&p, x).unwrap();
            assert_eq!(r, (l - d * x.0, l - d * x.1));
        }
        assert_eq!(ode_rhs(&p, (50.0, 50.0)).unwrap(), (0.0, 0.0));
        let fp = fixed_point(&p).unwrap();
        assert_eq!(fp.a_star, (50.0, 50.0));
        assert!(fp.stable);
    }

    #[test]
    fn reference_fixed_points() {
        for (k2, want) in [(1.001, 1801.96097), (1.01, 763.93202), (1.1, 97.50156)] {
            let p = sp(2000.0, 0.01, k2);
            let fp = fixed_point(&p).unwrap();
            let s = 4000.0;
            assert!((fp.a_star.0 - want).abs() < 1e-5, "{k2}: {:?}", fp.a_star);
            assert_eq!(fp.a_star.0 + fp.a_star.1, s);
            assert!(fp.residual < 1e-9 * s);
            assert!(fp.stable);
        }
    }

    #[test]
    fn rounded_point_residual_is_bounded_by_rounding() {
        let p = sp(2000.0, 0.01, 1.001);
        let x = (1801.96, 2198.04);
        let r = ode_rhs(&p, x).unwrap();
        let j = jacobian(&p, fixed_point(&p).unwrap().a_star).unwrap();
        // Along the conserved line the derivative of rhs_1 is J00 - J01.
        let bound = (j[0][0] - j[0][1]).abs() * 0.005 * 1.01;
        assert!(r.0.abs() <= bound && r.1.abs() <= bound, "{r:?} vs {bound}");
    }

    #[test]
    fn trajectories_are_attracted() {
        let p = sp(2000.0, 0.01, 1.01);
        let fp = fixed_point(&p).unwrap();
        let end = rk4(&p, (2000.0, 2000.0), 0.5, 20_000);
        assert!((end.0 - fp.a_star.0).abs() < 1e-3 && (end.1 - fp.a_star.1).abs() < 1e-3, "{end:?}");
    }

    #[test]
    fn negative_counts_are_rejected() {
        assert!(ode_rhs(&sp(10.0, 0.1, 1.2), (-1.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn equilibrium_properties(v in 1.0f64..5000.0, dd in 1e-4f64..1.0, k1 in 0.1f64..3.0, k2 in 0.1f64..3.0) {
            let p = ScaledParams::new(v, dd, vec![k1, k2]).unwrap();
            let fp = fixed_point(&p).unwrap();
            let s = 2.0 * v;
            prop_assert!((fp.a_star.0 + fp.a_star.1 - s).abs() <= 4.0 * f64::EPSILON * s);
            prop_assert!(fp.a_star.0 >= 0.0 && fp.a_star.1 >= 0.0);
            prop_assert!(fp.residual < 1e-9 * s, "{}", fp.residual);
            prop_assert!(fp.stable);
        }

        #[test]
        fn continuity_at_the_tie(eps in 1e-9f64..1e-6) {
            let fp = fixed_point(&sp(200.0, 0.05, 1.0 + eps)).unwrap();
            prop_assert!((fp.a_star.0 - 200.0).abs() < 1e-2);
        }
    }
}
