//! Truncated multivariate polynomials with complex coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::C64;
use crate::precision::DdComplex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exponent: Vec<u32>,
    pub coeff: C64,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exponent.iter().sum()
    }
}

/// Sparse polynomial in `n` variables, stored up to a declared total degree.
/// The constant term is always zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPoly {
    n: usize,
    degree: u32,
    terms: Vec<Monomial>,
}

impl TruncatedPoly {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            degree: 0,
            terms: Vec::new(),
        }
    }

    /// Builds a polynomial, merging repeated exponents and dropping zero
    /// coefficients. Terms are kept in lexicographic exponent order.
    pub fn new(n: usize, degree: u32, terms: Vec<Monomial>) -> Result<Self> {
        let mut merged: Vec<Monomial> = Vec::with_capacity(terms.len());
        for t in terms {
            if t.exponent.len() != n {
                return Err(Error::InvalidGerm(format!(
                    "monomial exponent has length {}, expected {n}",
                    t.exponent.len()
                )));
            }
            if t.degree() == 0 {
                if t.coeff != C64::new(0.0, 0.0) {
                    return Err(Error::InvalidGerm(
                        "higher-order term has a constant part".into(),
                    ));
                }
                continue;
            }
            if t.degree() > degree {
                return Err(Error::InvalidGerm(format!(
                    "monomial of degree {} exceeds truncation degree {degree}",
                    t.degree()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::InvalidGerm("non-finite coefficient".into()));
            }
            match merged.iter_mut().find(|m| m.exponent == t.exponent) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|m| m.coeff != C64::new(0.0, 0.0));
        merged.sort_by(|p, q| p.exponent.cmp(&q.exponent));
        Ok(Self {
            n,
            degree,
            terms: merged,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|t| t.coeff * monomial_value(&t.exponent, x))
            .sum()
    }

    pub fn eval_dd(&self, x: &[DdComplex]) -> DdComplex {
        let mut acc = DdComplex::ZERO;
        for t in &self.terms {
            let mut v = DdComplex::from(t.coeff);
            for (xi, &e) in x.iter().zip(&t.exponent) {
                if e > 0 {
                    v = v * xi.powu(e);
                }
            }
            acc = acc + v;
        }
        acc
    }

    /// Partial derivative with respect to variable `k`.
    pub fn partial(&self, k: usize, x: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for t in &self.terms {
            let e = t.exponent[k];
            if e == 0 {
                continue;
            }
            let mut v = t.coeff * f64::from(e);
            for (i, (xi, &ei)) in x.iter().zip(&t.exponent).enumerate() {
                let p = if i == k { ei - 1 } else { ei };
                if p > 0 {
                    v *= xi.powu(p);
                }
            }
            acc += v;
        }
        acc
    }

    /// Coefficients after the substitution `x_i -> alpha_i x_i`, times `factor`.
    pub fn substitute_scaling(&self, alpha: &[C64], factor: C64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Monomial {
                exponent: t.exponent.clone(),
                coeff: t.coeff * monomial_value(&t.exponent, alpha) * factor,
            })
            .collect();
        Self {
            n: self.n,
            degree: self.degree,
            terms,
        }
    }

    /// Sum of absolute coefficients, a crude bound for `|A(x)| / |x|` on the
    /// unit polydisc.
    pub fn l1_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).sum()
    }
}

/// `x^e` for a non-negative exponent vector.
pub fn monomial_value(e: &[u32], x: &[C64]) -> C64 {
    let mut v = C64::new(1.0, 0.0);
    for (xi, &ei) in x.iter().zip(e) {
        if ei > 0 {
            v *= xi.powu(ei);
        }
    }
    v
}
