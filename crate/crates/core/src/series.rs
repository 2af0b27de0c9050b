//! Truncated power series in one variable and the asymptotic solution of the
//! Abel equation `φ(F(z)) = φ(z) + 1` for `F(z) = z + 1 + Σ h_k z^{-k}`.

use serde::{Deserialize, Serialize};

use crate::numeric::{expm1, log1p, C64};

/// Coefficients `s_0 + s_1 u + ... + s_N u^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series(pub Vec<C64>);

impl Series {
    pub fn zero(order: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); order + 1])
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.order();
        let mut out = Self::zero(n);
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate().take(n + 1 - i) {
                out.0[i + j] += a * b;
            }
        }
        out
    }

    pub fn scale(&self, k: C64) -> Self {
        Self(self.0.iter().map(|v| v * k).collect())
    }

    /// `exp(s)` for a series with zero constant term.
    pub fn exp(&self) -> Self {
        debug_assert!(self.0[0].norm() == 0.0);
        let n = self.order();
        let mut out = Self::zero(n);
        out.0[0] = C64::new(1.0, 0.0);
        // e' = s' e
        for k in 1..=n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 1..=k {
                acc += self.0[j] * out.0[k - j] * j as f64;
            }
            out.0[k] = acc / k as f64;
        }
        out
    }

    /// `log(1 + s)` for a series with zero constant term.
    pub fn log1p(&self) -> Self {
        debug_assert!(self.0[0].norm() == 0.0);
        let n = self.order();
        let mut out = Self::zero(n);
        // (1 + s) l' = s'
        for k in 1..=n {
            let mut acc = self.0[k] * k as f64;
            for j in 1..k {
                acc -= self.0[k - j] * out.0[j] * j as f64;
            }
            out.0[k] = acc / k as f64;
        }
        out
    }

    /// `(1 + s)^p - 1` for a series with zero constant term.
    pub fn pow1p_minus_one(&self, p: f64) -> Self {
        let mut out = self.log1p().scale(C64::new(p, 0.0)).exp();
        out.0[0] = C64::new(0.0, 0.0);
        out
    }
}

/// `φ_0(z) = z - b log z + Σ_{k=1}^{K} c_k z^{-k}`, an asymptotic Fatou
/// coordinate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AbelSeries {
    pub b: C64,
    pub c: Vec<C64>,
}

impl AbelSeries {
    /// The identity approximation `φ_0(z) = z`.
    pub fn raw() -> Self {
        Self::default()
    }

    /// Solves the Abel equation order by order for
    /// `F(z) = z (1 + e(1/z))`, given `e(u) = u + h_1 u^2 + h_2 u^3 + ...`
    /// as a series of order `order + 2`.
    pub fn from_map_series(eps: &Series, order: usize) -> Self {
        debug_assert!(eps.order() >= order + 2);
        let log_eps = eps.log1p();
        let h = |k: usize| eps.0[k + 1];
        let b = h(1);
        let pows: Vec<Series> = (0..=order)
            .map(|j| eps.pow1p_minus_one(-(j as f64)))
            .collect();
        let mut c = vec![C64::new(0.0, 0.0); order + 1];
        for k in 1..=order {
            let mut acc = h(k + 1) - b * log_eps.0[k + 1];
            for j in 1..k {
                acc += c[j] * pows[j].0[k + 1 - j];
            }
            c[k] = acc / k as f64;
        }
        c.remove(0);
        Self { b, c }
    }

    /// Series for the model map `z ∏ (1 + a_i / z)^{-M_i}`.
    pub fn for_model(a: &[C64], multi_index: &[u32], order: usize) -> Self {
        let n = order + 2;
        let mut log_sum = Series::zero(n);
        for (ai, &mi) in a.iter().zip(multi_index) {
            if mi == 0 {
                continue;
            }
            let mut lin = Series::zero(n);
            lin.0[1] = *ai;
            let l = lin.log1p().scale(C64::new(-f64::from(mi), 0.0));
            for k in 0..=n {
                log_sum.0[k] += l.0[k];
            }
        }
        let mut eps = log_sum.exp();
        eps.0[0] = C64::new(0.0, 0.0);
        Self::from_map_series(&eps, order)
    }

    pub fn order(&self) -> usize {
        self.c.len()
    }

    pub fn eval(&self, z: C64) -> C64 {
        let u = 1.0 / z;
        let mut tail = C64::new(0.0, 0.0);
        for ck in self.c.iter().rev() {
            tail = (tail + ck) * u;
        }
        z - self.b * z.ln() + tail
    }

    /// `φ_0(z + dz) - φ_0(z) - 1`, evaluated without cancellation.
    pub fn residual(&self, z: C64, dz: C64) -> C64 {
        let l = log1p(dz / z);
        let mut acc = dz - 1.0 - self.b * l;
        let mut zk = C64::new(1.0, 0.0);
        for (k, ck) in self.c.iter().enumerate() {
            zk /= z;
            acc += ck * zk * expm1(-l * (k + 1) as f64);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn exp_log_round_trip() {
        let s = Series(vec![
            c(0.0, 0.0),
            c(0.5, 0.1),
            c(-0.2, 0.3),
            c(0.05, 0.0),
            c(0.0, -0.1),
        ]);
        let back = s
            .exp()
            .0
            .iter()
            .enumerate()
            .map(|(k, v)| if k == 0 { v - 1.0 } else { *v })
            .collect();
        let l = Series(back).log1p();
        for (p, q) in l.0.iter().zip(&s.0) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn binomial_series() {
        let mut s = Series::zero(5);
        s.0[1] = c(1.0, 0.0);
        let p = s.pow1p_minus_one(-2.0);
        let expected = [0.0, -2.0, 3.0, -4.0, 5.0, -6.0];
        for (v, e) in p.0.iter().zip(expected) {
            assert!((v - e).norm() < 1e-13);
        }
    }

    #[test]
    fn worked_model_coefficients() {
        // F(z) = z (1 - 1/(2z))^{-2} = z + 1 + 3/(4z) + 1/(2 z^2) + ...
        let a = [c(-0.5, 0.0), c(-0.5, 0.0)];
        let s = AbelSeries::for_model(&a, &[1, 1], 6);
        assert!((s.b - 0.75).norm() < 1e-15);
        let f = |z: C64| z / ((1.0 - 0.5 / z) * (1.0 - 0.5 / z));
        for z in [c(50.0, 10.0), c(200.0, -30.0)] {
            let r = s.residual(z, f(z) - z);
            assert!(r.norm() < 10.0 * z.norm().powi(-8) + 1e-13, "{r}");
        }
    }

    #[test]
    fn residual_matches_direct_difference() {
        let a = [c(-1.0, 0.0)];
        let s = AbelSeries::for_model(&a, &[1], 4);
        let z = c(7.0, 2.0);
        let dz = c(1.1, -0.05);
        let direct = s.eval(z + dz) - s.eval(z) - 1.0;
        assert!((s.residual(z, dz) - direct).norm() < 1e-13);
    }

    #[test]
    fn quadratic_model_has_unit_log_coefficient() {
        // z / (1 - 1/z) = z + 1 + 1/z + ..., so b = 1.
        let s = AbelSeries::for_model(&[c(-1.0, 0.0)], &[1], 3);
        assert!((s.b - 1.0).norm() < 1e-15);
        let raw = AbelSeries::raw();
        assert_eq!(raw.residual(c(3.0, 0.0), c(1.0, 0.0)), c(0.0, 0.0));
    }
}
