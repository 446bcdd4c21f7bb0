//! Extended-range double-double numbers.
//!
//! An [`ExtFloat`] carries roughly 106 bits of mantissa and a 64-bit binary
//! exponent, so long products of Gamma-like factors neither overflow nor lose
//! the last digits that the balance functional needs when it subtracts two
//! nearly equal flows.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::SignedLog;

/// `(hi + lo) * 2^exp` with `|hi|` in `[0.5, 1)`, or exactly zero.
#[derive(Clone, Copy, PartialEq)]
pub struct ExtFloat {
    hi: f64,
    lo: f64,
    exp: i64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Splits a finite non-zero `x` into `m * 2^e` with `|m|` in `[0.5, 1)`.
fn frexp(x: f64) -> (f64, i64) {
    let bits = x.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i64;
    if raw == 0 {
        // subnormal
        let (m, e) = frexp(x * f64::from_bits(0x43f0_0000_0000_0000)); // 2^64
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1022 << 52));
    (m, raw - 1022)
}

/// `x * 2^k`, saturating to zero or infinity.
fn ldexp(mut x: f64, mut k: i64) -> f64 {
    const STEP: i64 = 1000;
    while k > STEP {
        x *= f64::from_bits(((1023 + STEP) as u64) << 52);
        k -= STEP;
        if x.is_infinite() {
            return x;
        }
    }
    while k < -STEP {
        x *= f64::from_bits(((1023 - STEP) as u64) << 52);
        k += STEP;
        if x == 0.0 {
            return x;
        }
    }
    x * f64::from_bits(((1023 + k) as u64) << 52)
}

impl ExtFloat {
    pub const ZERO: ExtFloat = ExtFloat { hi: 0.0, lo: 0.0, exp: 0 };
    pub const ONE: ExtFloat = ExtFloat { hi: 0.5, lo: 0.0, exp: 1 };

    fn normalize(hi: f64, lo: f64, exp: i64) -> ExtFloat {
        let (s, e) = two_sum(hi, lo);
        if s == 0.0 {
            return ExtFloat::ZERO;
        }
        debug_assert!(s.is_finite(), "non-finite mantissa in ExtFloat");
        let (m, k) = frexp(s);
        ExtFloat {
            hi: m,
            lo: ldexp(e, -k),
            exp: exp + k,
        }
    }

    pub fn from_f64(x: f64) -> ExtFloat {
        assert!(x.is_finite(), "ExtFloat::from_f64 needs a finite value, got {x}");
        ExtFloat::normalize(x, 0.0, 0)
    }

    /// Exact sum of two doubles.
    pub fn from_sum(a: f64, b: f64) -> ExtFloat {
        let (s, e) = two_sum(a, b);
        ExtFloat::normalize(s, e, 0)
    }

    /// Exact for every `u64` below 2^106.
    pub fn from_u64(n: u64) -> ExtFloat {
        let hi = (n >> 32) as f64 * 4_294_967_296.0;
        let lo = (n & 0xffff_ffff) as f64;
        ExtFloat::normalize(hi, lo, 0)
    }

    /// `exp(l)` to the accuracy of `l` itself.
    pub fn from_ln(l: f64) -> ExtFloat {
        if l == f64::NEG_INFINITY {
            return ExtFloat::ZERO;
        }
        assert!(l.is_finite(), "ExtFloat::from_ln needs a finite log, got {l}");
        const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
        const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
        let k = (l / std::f64::consts::LN_2).floor();
        let r = (l - k * LN2_HI) - k * LN2_LO;
        ExtFloat::normalize(r.exp(), 0.0, k as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.hi == 0.0
    }

    pub fn signum(&self) -> i8 {
        if self.hi > 0.0 {
            1
        } else if self.hi < 0.0 {
            -1
        } else {
            0
        }
    }

    pub fn abs(self) -> ExtFloat {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Nearest double; overflows to infinity and underflows to zero.
    pub fn to_f64(&self) -> f64 {
        ldexp(self.hi + self.lo, self.exp)
    }

    /// Natural log of the absolute value; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.hi.abs().ln() + (self.lo / self.hi).ln_1p() + self.exp as f64 * std::f64::consts::LN_2
    }

    pub fn to_signed_log(&self) -> SignedLog {
        SignedLog::new(self.signum(), self.ln_abs())
    }

    pub fn powi(self, mut k: u64) -> ExtFloat {
        let mut base = self;
        let mut acc = ExtFloat::ONE;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }

    pub fn recip(self) -> ExtFloat {
        ExtFloat::ONE / self
    }
}

impl fmt::Debug for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExtFloat({:e} + {:e}) * 2^{}", self.hi, self.lo, self.exp)
    }
}

impl From<f64> for ExtFloat {
    fn from(x: f64) -> Self {
        ExtFloat::from_f64(x)
    }
}

impl Neg for ExtFloat {
    type Output = ExtFloat;
    fn neg(self) -> ExtFloat {
        ExtFloat {
            hi: -self.hi,
            lo: -self.lo,
            exp: self.exp,
        }
    }
}

impl Mul for ExtFloat {
    type Output = ExtFloat;
    fn mul(self, rhs: ExtFloat) -> ExtFloat {
        if self.is_zero() || rhs.is_zero() {
            return ExtFloat::ZERO;
        }
        let (p, mut e) = two_prod(self.hi, rhs.hi);
        e += self.hi * rhs.lo + self.lo * rhs.hi;
        ExtFloat::normalize(p, e, self.exp + rhs.exp)
    }
}

impl Mul<f64> for ExtFloat {
    type Output = ExtFloat;
    fn mul(self, rhs: f64) -> ExtFloat {
        self * ExtFloat::from_f64(rhs)
    }
}

impl Div for ExtFloat {
    type Output = ExtFloat;
    fn div(self, rhs: ExtFloat) -> ExtFloat {
        assert!(!rhs.is_zero(), "ExtFloat division by zero");
        if self.is_zero() {
            return ExtFloat::ZERO;
        }
        let q1 = self.hi / rhs.hi;
        let (p, mut pe) = two_prod(rhs.hi, q1);
        pe += rhs.lo * q1;
        let (s, mut e) = two_sum(self.hi, -p);
        e += self.lo - pe;
        let q2 = (s + e) / rhs.hi;
        let (h, l) = quick_two_sum(q1, q2);
        ExtFloat::normalize(h, l, self.exp - rhs.exp)
    }
}

impl Div<f64> for ExtFloat {
    type Output = ExtFloat;
    fn div(self, rhs: f64) -> ExtFloat {
        self / ExtFloat::from_f64(rhs)
    }
}

impl Add for ExtFloat {
    type Output = ExtFloat;
    fn add(self, rhs: ExtFloat) -> ExtFloat {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let shift = small.exp - big.exp;
        if shift < -1100 {
            return big;
        }
        let sh = ldexp(small.hi, shift);
        let sl = ldexp(small.lo, shift);
        let (s, mut e) = two_sum(big.hi, sh);
        let (t, f) = two_sum(big.lo, sl);
        e += t;
        let (s, mut e) = quick_two_sum(s, e);
        e += f;
        ExtFloat::normalize(s, e, big.exp)
    }
}

impl Sub for ExtFloat {
    type Output = ExtFloat;
    fn sub(self, rhs: ExtFloat) -> ExtFloat {
        self + (-rhs)
    }
}

impl PartialOrd for ExtFloat {
    fn partial_cmp(&self, other: &ExtFloat) -> Option<Ordering> {
        Some((*self - *other).signum().cmp(&0))
    }
}

impl std::iter::Sum for ExtFloat {
    fn sum<I: Iterator<Item = ExtFloat>>(iter: I) -> ExtFloat {
        iter.fold(ExtFloat::ZERO, |acc, x| acc + x)
    }
}

impl std::iter::Product for ExtFloat {
    fn product<I: Iterator<Item = ExtFloat>>(iter: I) -> ExtFloat {
        iter.fold(ExtFloat::ONE, |acc, x| acc * x)
    }
}
