//! Double-double ("binary128-style") arithmetic for long orbits.
//!
//! A [`DoubleDouble`] carries an unevaluated sum `hi + lo` with
//! `|lo| <= ulp(hi) / 2`, giving roughly 106 bits of significand. Only the
//! ring operations and division are provided; transcendental functions are
//! evaluated in binary64 after rounding.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Working precision for orbit iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Binary64,
    DoubleDouble,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
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

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub fn new(hi: f64) -> Self {
        Self { hi, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Self::new(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::new(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::new(q3)
    }
}

/// Complex number with double-double parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdComplex {
    pub re: DoubleDouble,
    pub im: DoubleDouble,
}

impl DdComplex {
    pub const ZERO: Self = Self {
        re: DoubleDouble::ZERO,
        im: DoubleDouble::ZERO,
    };
    pub const ONE: Self = Self {
        re: DoubleDouble::ONE,
        im: DoubleDouble::ZERO,
    };

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn norm_sqr(self) -> DoubleDouble {
        self.re * self.re + self.im * self.im
    }

    pub fn powu(self, e: u32) -> Self {
        let mut acc = Self::ONE;
        let mut base = self;
        let mut k = e;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl From<Complex64> for DdComplex {
    fn from(z: Complex64) -> Self {
        Self {
            re: z.re.into(),
            im: z.im.into(),
        }
    }
}

impl Add for DdComplex {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl Sub for DdComplex {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl Mul for DdComplex {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

impl Div for DdComplex {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let den = rhs.norm_sqr();
        let num = self
            * Self {
                re: rhs.re,
                im: -rhs.im,
            };
        Self {
            re: num.re / den,
            im: num.im / den,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_third_has_extra_digits() {
        let third = DoubleDouble::ONE / DoubleDouble::new(3.0);
        let back = third * DoubleDouble::new(3.0) - DoubleDouble::ONE;
        assert!(back.to_f64().abs() < 1e-31);
        assert!(third.lo != 0.0);
    }

    #[test]
    fn addition_keeps_small_tail() {
        let a = DoubleDouble::new(1.0) + DoubleDouble::new(1e-20);
        assert_eq!(a.hi, 1.0);
        assert!((a.lo - 1e-20).abs() < 1e-36);
        let b = a - DoubleDouble::ONE;
        assert!((b.to_f64() - 1e-20).abs() < 1e-35);
    }

    #[test]
    fn complex_division_round_trip() {
        let a = DdComplex::from(Complex64::new(0.3, -1.7));
        let b = DdComplex::from(Complex64::new(2.5, 0.25));
        let q = a / b;
        let back = q * b - a;
        assert!(back.to_c64().norm() < 1e-30);
    }

    #[test]
    fn powu_matches_repeated_product() {
        let z = DdComplex::from(Complex64::new(0.9, 0.1));
        let mut p = DdComplex::ONE;
        for _ in 0..7 {
            p = p * z;
        }
        assert!((z.powu(7) - p).to_c64().norm() < 1e-30);
    }
}
