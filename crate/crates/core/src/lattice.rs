//! Integer data attached to the multi-index `M`: `d = gcd(M)`, the primitive
//! direction `m = M / d`, and a unimodular completion of `m`.
//!
//! The completion `𝓜` has non-negative entries and first row `m`; its
//! inverse `𝓝` supplies the exponents of the closed-form chart inverse.
//! All elimination is done in arbitrary precision and the result is checked
//! to fit in `i64`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::C64;

/// Row-major integer matrix.
pub type IntMatrix = Vec<Vec<i64>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeData {
    pub d: u64,
    pub m: Vec<u32>,
    pub m_bar: usize,
    /// 𝓜, first row `m`.
    pub m_mat: Vec<Vec<i64>>,
    /// 𝓝 = 𝓜⁻¹.
    pub n_mat: Vec<Vec<i64>>,
}

impl LatticeData {
    /// Builds the lattice data for an arbitrary multi-index. Coordinates with
    /// `m_i = 0` may sit anywhere; they are moved last for the completion and
    /// the result is expressed back in the original ordering.
    pub fn from_multi_index(multi_index: &[u32]) -> Result<Self> {
        let (d, m, m_bar) = reduce_multiindex(multi_index)?;
        let n = m.len();
        let mut order: Vec<usize> = (0..n).filter(|&i| m[i] > 0).collect();
        order.extend((0..n).filter(|&i| m[i] == 0));
        let permuted: Vec<i64> = order.iter().map(|&i| i64::from(m[i])).collect();
        let (mp, np) = complete_unimodular(&permuted)?;
        let mut m_mat = vec![vec![0i64; n]; n];
        let mut n_mat = vec![vec![0i64; n]; n];
        for r in 0..n {
            for (k, &orig) in order.iter().enumerate() {
                m_mat[r][orig] = mp[r][k];
                n_mat[orig][r] = np[k][r];
            }
        }
        Ok(Self {
            d,
            m,
            m_bar,
            m_mat,
            n_mat,
        })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn m_i64(&self) -> Vec<i64> {
        self.m.iter().map(|&v| i64::from(v)).collect()
    }

    /// Rows `2..n` of 𝓜, the exponent vectors of the invariant basis.
    pub fn basis_rows(&self) -> &[Vec<i64>] {
        &self.m_mat[1..]
    }

    /// Row `i` of 𝓝 without its first entry, the `w`-exponents of coordinate `i`.
    pub fn w_exponents(&self, i: usize) -> &[i64] {
        &self.n_mat[i][1..]
    }
}

/// `(d, m, m_bar)` with `d = gcd(M)`, `m = M / d` and `m_bar` the number of
/// zero entries.
pub fn reduce_multiindex(multi_index: &[u32]) -> Result<(u64, Vec<u32>, usize)> {
    let d = multi_index.iter().fold(0u32, |g, &e| g.gcd(&e));
    if d == 0 {
        return Err(Error::ZeroMultiIndex);
    }
    let m: Vec<u32> = multi_index.iter().map(|&e| e / d).collect();
    let m_bar = m.iter().filter(|&&e| e == 0).count();
    Ok((u64::from(d), m, m_bar))
}

type BigMat = Vec<Vec<BigInt>>;

fn identity(n: usize) -> BigMat {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigInt::one()
                    } else {
                        BigInt::zero()
                    }
                })
                .collect()
        })
        .collect()
}

/// Completes a primitive vector `m` (zeros last) to unimodular `(𝓜, 𝓝)`.
///
/// Extended-Euclid column operations reduce `m` to `e_1`, which yields `𝓝`
/// and `𝓜 = 𝓝⁻¹` simultaneously. Rows `2..` of `𝓜` are then shifted by
/// multiples of `m` to their least non-negative representatives. For `n = 2`
/// that representative is unique.
pub fn complete_unimodular(m: &[i64]) -> Result<(IntMatrix, IntMatrix)> {
    let n = m.len();
    if n == 0 {
        return Err(Error::ZeroMultiIndex);
    }
    if m.iter().any(|&v| v < 0) {
        return Err(Error::InvalidGerm(
            "multi-index entries must be non-negative".into(),
        ));
    }
    let k = m.iter().take_while(|&&v| v > 0).count();
    if k == 0 {
        return Err(Error::ZeroMultiIndex);
    }
    if m[k..].iter().any(|&v| v != 0) {
        return Err(Error::BadOrdering { index: k });
    }
    let g = m[..k].iter().fold(0i64, |acc, &v| acc.gcd(&v));
    if g != 1 {
        return Err(Error::NotPrimitive { gcd: g as u64 });
    }

    let mut row: Vec<BigInt> = m[..k].iter().map(|&v| BigInt::from(v)).collect();
    let mut v = identity(k);
    let mut vinv = identity(k);
    for j in (1..k).rev() {
        let (r0, rj) = (row[0].clone(), row[j].clone());
        if rj.is_zero() {
            continue;
        }
        let e = r0.extended_gcd(&rj);
        let (gg, s, t) = (e.gcd, e.x, e.y);
        let (p, q) = (&rj / &gg, &r0 / &gg);
        for r in v.iter_mut() {
            let (c0, cj) = (r[0].clone(), r[j].clone());
            r[0] = &s * &c0 + &t * &cj;
            r[j] = -&p * &c0 + &q * &cj;
        }
        let (row0, rowj) = (vinv[0].clone(), vinv[j].clone());
        vinv[0] = row0
            .iter()
            .zip(&rowj)
            .map(|(a, b)| &q * a + &p * b)
            .collect();
        vinv[j] = row0
            .iter()
            .zip(&rowj)
            .map(|(a, b)| -&t * a + &s * b)
            .collect();
        row[0] = gg;
        row[j] = BigInt::zero();
    }
    if row[0].is_negative() {
        for r in v.iter_mut() {
            r[0] = -r[0].clone();
        }
        vinv[0] = vinv[0].iter().map(|a| -a).collect();
    }

    if k >= 2 && determinant(&vinv).is_negative() {
        let last = k - 1;
        vinv[last] = vinv[last].iter().map(|a| -a).collect();
        for r in v.iter_mut() {
            r[last] = -r[last].clone();
        }
    }

    let first: Vec<BigInt> = vinv[0].clone();
    for i in 1..k {
        let shift = vinv[i]
            .iter()
            .zip(&first)
            .map(|(ri, mi)| (-ri).div_ceil(mi))
            .max()
            .unwrap_or_else(BigInt::zero);
        if shift.is_zero() {
            continue;
        }
        vinv[i] = vinv[i]
            .iter()
            .zip(&first)
            .map(|(ri, mi)| ri + &shift * mi)
            .collect();
        for r in v.iter_mut() {
            r[0] = &r[0] - &shift * &r[i];
        }
    }

    let mut m_mat = vec![vec![0i64; n]; n];
    let mut n_mat = vec![vec![0i64; n]; n];
    for i in 0..k {
        for j in 0..k {
            m_mat[i][j] = vinv[i][j].to_i64().ok_or(Error::Overflow)?;
            n_mat[i][j] = v[i][j].to_i64().ok_or(Error::Overflow)?;
        }
    }
    for i in k..n {
        m_mat[i][i] = 1;
        n_mat[i][i] = 1;
    }
    Ok((m_mat, n_mat))
}

fn determinant(a: &BigMat) -> BigInt {
    // Bareiss fraction-free elimination.
    let n = a.len();
    let mut m = a.clone();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(p) => {
                    m.swap(k, p);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

/// Exact determinant of an integer matrix.
pub fn det_i64(a: &[Vec<i64>]) -> BigInt {
    let big: BigMat = a
        .iter()
        .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    determinant(&big)
}

/// Exact product of two integer matrices.
pub fn mat_mul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<BigInt>> {
    let n = a.len();
    let p = b.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            (0..p)
                .map(|j| {
                    b.iter()
                        .enumerate()
                        .map(|(k, row)| BigInt::from(a[i][k]) * BigInt::from(row[j]))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// `λ_I = d <a, I>`.
pub fn lambda_of(index: &[i64], a: &[C64], d: u64) -> C64 {
    let dot: C64 = index.iter().zip(a).map(|(&i, ai)| ai * i as f64).sum();
    dot * d as f64
}

/// True iff each column `2..=n-m_bar` of 𝓝 has a strictly negative entry.
pub fn check_negative_columns(n_mat: &[Vec<i64>], m_bar: usize) -> bool {
    let n = n_mat.len();
    (1..n.saturating_sub(m_bar)).all(|col| n_mat.iter().any(|row| row[col] < 0))
}
