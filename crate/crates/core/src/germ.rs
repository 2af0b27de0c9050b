//! Germs `f_i(x) = x_i (1 + x^M (a_i + A_i(x)))` fixing the coordinate
//! hyperplanes, their normalization, evaluation and inversion.

use serde::{Deserialize, Serialize};

use crate::domains::{in_u, PetalSpec};
use crate::error::{Error, Result};
use crate::lattice::LatticeData;
use crate::numeric::{log1p, max_abs, solve_linear, C64};
use crate::poly::{monomial_value, TruncatedPoly};
use crate::precision::{DdComplex, Precision};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Germ {
    n: usize,
    multi_index: Vec<u32>,
    a: Vec<C64>,
    higher: Vec<TruncatedPoly>,
    trusted_radius: f64,
}

/// A point of `C^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint {
    pub coords: Vec<C64>,
}

impl ComplexPoint {
    pub fn new(coords: Vec<C64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGerm(
                "point has non-finite coordinates".into(),
            ));
        }
        Ok(Self { coords })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub points: Vec<Vec<C64>>,
    pub escaped: bool,
    pub escape_index: Option<usize>,
    pub capture_index: Option<usize>,
}

impl Germ {
    pub fn new(
        multi_index: Vec<u32>,
        a: Vec<C64>,
        higher: Vec<TruncatedPoly>,
        trusted_radius: f64,
    ) -> Result<Self> {
        let n = multi_index.len();
        if n == 0 {
            return Err(Error::InvalidGerm("dimension must be positive".into()));
        }
        if a.len() != n || higher.len() != n {
            return Err(Error::InvalidGerm(format!(
                "expected {n} leading coefficients and {n} higher-order terms"
            )));
        }
        if multi_index.iter().all(|&e| e == 0) {
            return Err(Error::InvalidGerm(
                "multi-index has no positive entry".into(),
            ));
        }
        if let Some(i) = a
            .iter()
            .position(|&ai| ai == C64::new(0.0, 0.0) || !ai.is_finite())
        {
            return Err(Error::InvalidGerm(format!(
                "leading coefficient a[{i}] must be non-zero and finite"
            )));
        }
        if let Some(i) = higher.iter().position(|p| p.n() != n) {
            return Err(Error::InvalidGerm(format!(
                "higher-order term {i} has wrong arity"
            )));
        }
        if !(trusted_radius > 0.0 && trusted_radius.is_finite()) {
            return Err(Error::InvalidGerm("trusted radius must be positive".into()));
        }
        Ok(Self {
            n,
            multi_index,
            a,
            higher,
            trusted_radius,
        })
    }

    /// Germ with `A = 0` and unit trusted radius.
    pub fn model(multi_index: Vec<u32>, a: Vec<C64>) -> Result<Self> {
        let n = multi_index.len();
        Self::new(multi_index, a, vec![TruncatedPoly::zero(n); n], 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn multi_index(&self) -> &[u32] {
        &self.multi_index
    }

    pub fn a(&self) -> &[C64] {
        &self.a
    }

    pub fn higher(&self) -> &[TruncatedPoly] {
        &self.higher
    }

    pub fn trusted_radius(&self) -> f64 {
        self.trusted_radius
    }

    pub fn truncation_degree(&self) -> u32 {
        self.higher.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    /// `<a, M>`.
    pub fn pairing(&self) -> C64 {
        self.a
            .iter()
            .zip(&self.multi_index)
            .map(|(ai, &mi)| ai * f64::from(mi))
            .sum()
    }

    pub fn is_polynomial_free(&self) -> bool {
        self.higher.iter().all(|p| p.is_zero())
    }

    /// `x^M` and the factors `t_i = x^M (a_i + A_i(x))`.
    pub fn factors(&self, x: &[C64]) -> (C64, Vec<C64>) {
        let xm = monomial_value(&self.multi_index, x);
        let t = self
            .a
            .iter()
            .zip(&self.higher)
            .map(|(ai, p)| xm * (ai + p.eval(x)))
            .collect();
        (xm, t)
    }

    pub fn evaluate(&self, x: &[C64]) -> Vec<C64> {
        let (_, t) = self.factors(x);
        x.iter().zip(&t).map(|(xi, ti)| xi + xi * ti).collect()
    }

    pub fn evaluate_dd(&self, x: &[DdComplex]) -> Vec<DdComplex> {
        let mut xm = DdComplex::ONE;
        for (xi, &e) in x.iter().zip(&self.multi_index) {
            if e > 0 {
                xm = xm * xi.powu(e);
            }
        }
        x.iter()
            .zip(&self.a)
            .zip(&self.higher)
            .map(|((&xi, &ai), p)| {
                let t = xm * (DdComplex::from(ai) + p.eval_dd(x));
                xi + xi * t
            })
            .collect()
    }

    /// Solves `f(x) = y` by the fixed point `x_i = y_i / (1 + t_i(x))`,
    /// falling back to damped Newton steps when that stalls. The residual is
    /// measured relative to `|y_i|` componentwise.
    pub fn evaluate_inverse(&self, y: &[C64], tol: f64) -> Result<Vec<C64>> {
        const BUDGET: usize = 200;
        let tol = tol.max(8.0 * f64::EPSILON);
        let residual = |x: &[C64]| -> f64 {
            let fx = self.evaluate(x);
            fx.iter()
                .zip(y)
                .map(|(u, v)| {
                    if *v == C64::new(0.0, 0.0) {
                        u.norm()
                    } else {
                        (u - v).norm() / v.norm()
                    }
                })
                .fold(0.0, f64::max)
        };
        let mut x = y.to_vec();
        let mut res = residual(&x);
        if res <= tol {
            return Ok(x);
        }
        for _ in 0..BUDGET {
            let (_, t) = self.factors(&x);
            let next: Vec<C64> = y.iter().zip(&t).map(|(yi, ti)| yi / (1.0 + ti)).collect();
            let r = residual(&next);
            if r < res {
                x = next;
                res = r;
            } else {
                match self.newton_step(&x, y) {
                    Some(nx) => {
                        let r2 = residual(&nx);
                        if r2 < res {
                            x = nx;
                            res = r2;
                        } else {
                            break;
                        }
                    }
                    None => break,
                }
            }
            if res <= tol {
                return Ok(x);
            }
        }
        Err(Error::NoConvergence {
            what: "evaluate_inverse",
            iterations: BUDGET,
            residual: res,
        })
    }

    fn newton_step(&self, x: &[C64], y: &[C64]) -> Option<Vec<C64>> {
        let jac = self.jacobian(x);
        let fx = self.evaluate(x);
        let rhs: Vec<C64> = fx.iter().zip(y).map(|(u, v)| v - u).collect();
        let dx = solve_linear(jac, rhs)?;
        let mut lambda = 1.0;
        let base = max_abs(&rhs_norms(&fx, y));
        for _ in 0..20 {
            let cand: Vec<C64> = x.iter().zip(&dx).map(|(xi, di)| xi + di * lambda).collect();
            let fc = self.evaluate(&cand);
            if max_abs(&rhs_norms(&fc, y)) < base {
                return Some(cand);
            }
            lambda *= 0.5;
        }
        None
    }

    /// Jacobian of `f` at `x`, row `i` holding `d f_i / d x_k`.
    pub fn jacobian(&self, x: &[C64]) -> Vec<Vec<C64>> {
        let n = self.n;
        let xm = monomial_value(&self.multi_index, x);
        let mut jac = vec![vec![C64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            let coeff = self.a[i] + self.higher[i].eval(x);
            for k in 0..n {
                let dxm = d_monomial(&self.multi_index, x, k);
                let dcoeff = self.higher[i].partial(k, x);
                let dt = dxm * coeff + xm * dcoeff;
                let mut v = x[i] * dt;
                if i == k {
                    v += 1.0 + xm * coeff;
                }
                jac[i][k] = v;
            }
        }
        jac
    }

    /// `prod_i f_i(x)^{e_i}`.
    pub fn power_image(&self, x: &[C64], e: &[i64]) -> Result<C64> {
        let fx = self.evaluate(x);
        let mut v = C64::new(1.0, 0.0);
        for (i, (fi, &ei)) in fx.iter().zip(e).enumerate() {
            if ei < 0 && (x[i] == C64::new(0.0, 0.0) || *fi == C64::new(0.0, 0.0)) {
                return Err(Error::ZeroCoordinate { index: i });
            }
            if ei != 0 {
                v *= crate::numeric::powi(*fi, ei);
            }
        }
        Ok(v)
    }

    /// The vector field `x^M (a_1 x_1, ..., a_n x_n)` whose time-one flow
    /// approximates `f`.
    pub fn infinitesimal_generator(&self, x: &[C64]) -> Vec<C64> {
        let xm = monomial_value(&self.multi_index, x);
        x.iter().zip(&self.a).map(|(xi, ai)| xm * ai * xi).collect()
    }

    pub fn orbit(
        &self,
        x: &[C64],
        j_max: usize,
        escape_radius: f64,
        petal: Option<(&PetalSpec, &LatticeData)>,
    ) -> OrbitRecord {
        self.orbit_with_precision(x, j_max, escape_radius, petal, Precision::Binary64)
    }

    pub fn orbit_with_precision(
        &self,
        x: &[C64],
        j_max: usize,
        escape_radius: f64,
        petal: Option<(&PetalSpec, &LatticeData)>,
        precision: Precision,
    ) -> OrbitRecord {
        let mut points = Vec::with_capacity(j_max.min(1 << 20) + 1);
        points.push(x.to_vec());
        let captured = |p: &[C64]| petal.is_some_and(|(spec, lat)| in_u(p, spec, lat).is_some());
        let mut capture_index = captured(x).then_some(0);
        let escapes = |p: &[C64]| p.iter().any(|c| !c.is_finite() || c.norm() > escape_radius);
        if escapes(x) {
            return OrbitRecord {
                points,
                escaped: true,
                escape_index: Some(0),
                capture_index,
            };
        }
        let mut dd: Vec<DdComplex> = x.iter().map(|&c| c.into()).collect();
        let mut cur = x.to_vec();
        for j in 1..=j_max {
            cur = match precision {
                Precision::Binary64 => self.evaluate(&cur),
                Precision::DoubleDouble => {
                    dd = self.evaluate_dd(&dd);
                    dd.iter().map(|c| c.to_c64()).collect()
                }
            };
            points.push(cur.clone());
            if capture_index.is_none() && captured(&cur) {
                capture_index = Some(j);
            }
            if escapes(&cur) {
                return OrbitRecord {
                    points,
                    escaped: true,
                    escape_index: Some(j),
                    capture_index,
                };
            }
        }
        OrbitRecord {
            points,
            escaped: false,
            escape_index: None,
            capture_index,
        }
    }
}

fn rhs_norms(fx: &[C64], y: &[C64]) -> Vec<C64> {
    fx.iter()
        .zip(y)
        .map(|(u, v)| {
            let s = if *v == C64::new(0.0, 0.0) {
                1.0
            } else {
                v.norm()
            };
            C64::new((u - v).norm() / s, 0.0)
        })
        .collect()
}

fn d_monomial(e: &[u32], x: &[C64], k: usize) -> C64 {
    if e[k] == 0 {
        return C64::new(0.0, 0.0);
    }
    let mut v = C64::new(f64::from(e[k]), 0.0);
    for (i, (xi, &ei)) in x.iter().zip(e).enumerate() {
        let p = if i == k { ei - 1 } else { ei };
        if p > 0 {
            v *= xi.powu(p);
        }
    }
    v
}

/// Rounding allowance for `<a, M> = -1`, relative to the size of its terms.
pub fn pairing_tolerance(g: &Germ) -> f64 {
    let scale: f64 =
        g.a.iter()
            .zip(&g.multi_index)
            .map(|(ai, &mi)| ai.norm() * f64::from(mi))
            .sum();
    8.0 * f64::EPSILON * scale.max(1.0)
}

/// Rescales a germ so that `<a, M> = -1`.
///
/// The scaling is `alpha = (1, .., beta, .., 1)` with `beta` placed at the first
/// index where `M_k > 0` and equal to the principal `M_k`-th root of
/// `-1 / <a, M>`. Germs already normalized to within rounding are returned
/// unchanged with `alpha = 1`.
pub fn normalize(g: &Germ) -> Result<(Germ, Vec<C64>)> {
    let s = g.pairing();
    if s.norm() == 0.0 {
        return Err(Error::DegenerateGerm);
    }
    let n = g.n;
    if (s + 1.0).norm() <= pairing_tolerance(g) {
        return Ok((g.clone(), vec![C64::new(1.0, 0.0); n]));
    }
    let k = g
        .multi_index
        .iter()
        .position(|&e| e > 0)
        .ok_or(Error::DegenerateGerm)?;
    let target = -1.0 / s;
    let beta = target.powf(1.0 / f64::from(g.multi_index[k]));
    let mut alpha = vec![C64::new(1.0, 0.0); n];
    alpha[k] = beta;
    let a = g.a.iter().map(|ai| -ai / s).collect();
    let higher = g
        .higher
        .iter()
        .map(|p| p.substitute_scaling(&alpha, target))
        .collect();
    let germ = Germ {
        n,
        multi_index: g.multi_index.clone(),
        a,
        higher,
        trusted_radius: g.trusted_radius / beta.norm().max(1.0),
    };
    Ok((germ, alpha))
}

/// One step of a map of the form `x_i -> x_i (1 + t_i(x))`, reporting the
/// factors `t_i` so callers can accumulate `log(1 + t_i)` without cancellation.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn multi_index(&self) -> &[u32];
    fn leading(&self) -> &[C64];
    fn step(&self, x: &[C64]) -> Result<(Vec<C64>, Vec<C64>)>;

    /// Extended-precision step, when the map supports one.
    fn step_dd(&self, _x: &[DdComplex]) -> Option<Vec<DdComplex>> {
        None
    }
}

impl Dynamics for Germ {
    fn dim(&self) -> usize {
        self.n
    }

    fn multi_index(&self) -> &[u32] {
        &self.multi_index
    }

    fn leading(&self) -> &[C64] {
        &self.a
    }

    fn step(&self, x: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let (_, t) = self.factors(x);
        let next = x.iter().zip(&t).map(|(xi, ti)| xi + xi * ti).collect();
        Ok((next, t))
    }

    fn step_dd(&self, x: &[DdComplex]) -> Option<Vec<DdComplex>> {
        Some(self.evaluate_dd(x))
    }
}

/// The inverse germ `f^{-1}` written in the coordinates `y = x / alpha`,
/// where `alpha^M = -1`. In these coordinates it again has leading
/// coefficients `a`, so every forward construction applies to it verbatim.
#[derive(Clone, Debug)]
pub struct BackwardGerm {
    germ: Germ,
    alpha: Vec<C64>,
    tol: f64,
}

impl BackwardGerm {
    pub fn new(germ: &Germ) -> Self {
        let n = germ.n;
        let mut alpha = vec![C64::new(1.0, 0.0); n];
        let k = germ
            .multi_index
            .iter()
            .position(|&e| e > 0)
            .expect("validated germ");
        alpha[k] = C64::from_polar(1.0, std::f64::consts::PI / f64::from(germ.multi_index[k]));
        Self {
            germ: germ.clone(),
            alpha,
            tol: 1e-14,
        }
    }

    pub fn alpha(&self) -> &[C64] {
        &self.alpha
    }

    pub fn to_original(&self, y: &[C64]) -> Vec<C64> {
        y.iter().zip(&self.alpha).map(|(yi, ai)| yi * ai).collect()
    }

    pub fn from_original(&self, x: &[C64]) -> Vec<C64> {
        x.iter().zip(&self.alpha).map(|(xi, ai)| xi / ai).collect()
    }

    pub fn germ(&self) -> &Germ {
        &self.germ
    }
}

impl Dynamics for BackwardGerm {
    fn dim(&self) -> usize {
        self.germ.n
    }

    fn multi_index(&self) -> &[u32] {
        &self.germ.multi_index
    }

    fn leading(&self) -> &[C64] {
        &self.germ.a
    }

    fn step(&self, y: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let x = self.to_original(y);
        let prev = self.germ.evaluate_inverse(&x, self.tol)?;
        let (_, t) = self.germ.factors(&prev);
        let s: Vec<C64> = t.iter().map(|ti| -ti / (1.0 + ti)).collect();
        Ok((self.from_original(&prev), s))
    }
}

/// `sum_i c_i log(1 + t_i)`, the logarithm of `prod_i (1 + t_i)^{c_i}`.
pub fn weighted_log_factor(c: &[C64], t: &[C64]) -> C64 {
    c.iter().zip(t).map(|(ci, ti)| ci * log1p(*ti)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Monomial;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn quadratic() -> Germ {
        Germ::model(vec![1], vec![c(-1.0, 0.0)]).unwrap()
    }

    fn worked() -> Germ {
        Germ::model(vec![1, 1], vec![c(-0.5, 0.0), c(-0.5, 0.0)]).unwrap()
    }

    fn with_higher() -> Germ {
        let p0 = TruncatedPoly::new(
            2,
            2,
            vec![
                Monomial {
                    exponent: vec![1, 0],
                    coeff: c(0.3, -0.2),
                },
                Monomial {
                    exponent: vec![0, 2],
                    coeff: c(-0.7, 0.1),
                },
            ],
        )
        .unwrap();
        let p1 = TruncatedPoly::new(
            2,
            2,
            vec![Monomial {
                exponent: vec![1, 1],
                coeff: c(1.2, 0.4),
            }],
        )
        .unwrap();
        Germ::new(
            vec![1, 2],
            vec![c(-0.6, 0.1), c(-0.2, -0.05)],
            vec![p0, p1],
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_germs() {
        assert!(Germ::model(vec![0, 0], vec![c(-1.0, 0.0); 2]).is_err());
        assert!(Germ::model(vec![1, 0], vec![c(-1.0, 0.0), c(0.0, 0.0)]).is_err());
        assert!(Germ::model(vec![1], vec![c(-1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let g = Germ::model(vec![1, 1], vec![c(-2.0, 0.0), c(1.0, 0.0)]).unwrap();
        let (h, alpha) = normalize(&g).unwrap();
        assert_eq!(h, g);
        assert_eq!(alpha, vec![c(1.0, 0.0); 2]);

        let g = Germ::model(vec![1, 1], vec![c(-4.0, 0.0), c(2.0, 0.0)]).unwrap();
        let (h, alpha) = normalize(&g).unwrap();
        assert_eq!(h.a(), &[c(-2.0, 0.0), c(1.0, 0.0)]);
        assert!((alpha[0] - c(0.5, 0.0)).norm() < 1e-16);
        assert_eq!(alpha[1], c(1.0, 0.0));

        let g = Germ::model(vec![1], vec![c(3.0, 0.0)]).unwrap();
        let (h, alpha) = normalize(&g).unwrap();
        assert!((h.a()[0] - c(-1.0, 0.0)).norm() < 1e-16);
        assert!((alpha[0] - c(-1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let g = Germ::model(vec![1, 1], vec![c(-1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(matches!(normalize(&g), Err(Error::DegenerateGerm)));
    }

    #[test]
    fn normalized_germ_is_conjugate() {
        let g = with_higher();
        let (h, alpha) = normalize(&g).unwrap();
        let y = [c(0.01, 0.004), c(-0.006, 0.009)];
        let x: Vec<C64> = y.iter().zip(&alpha).map(|(u, v)| u * v).collect();
        let fx = g.evaluate(&x);
        let fy = h.evaluate(&y);
        for i in 0..2 {
            assert!((fx[i] / alpha[i] - fy[i]).norm() < 1e-16);
        }
    }

    #[test]
    fn evaluate_examples() {
        let f = quadratic();
        assert!((f.evaluate(&[c(0.1, 0.0)])[0] - c(0.09, 0.0)).norm() < 1e-17);
        assert_eq!(worked().evaluate(&[c(0.0, 0.0); 2]), vec![c(0.0, 0.0); 2]);
        let y = worked().evaluate(&[c(0.1, 0.0), c(0.1, 0.0)]);
        for v in y {
            assert!((v - c(0.0995, 0.0)).norm() < 1e-17);
        }
    }

    #[test]
    fn evaluate_dd_agrees_with_binary64() {
        let g = with_higher();
        let x = [c(0.02, -0.01), c(0.015, 0.005)];
        let xd: Vec<DdComplex> = x.iter().map(|&v| v.into()).collect();
        let a = g.evaluate(&x);
        let b = g.evaluate_dd(&xd);
        for i in 0..2 {
            assert!((a[i] - b[i].to_c64()).norm() < 1e-17);
        }
    }

    #[test]
    fn evaluate_inverse_examples() {
        let f = quadratic();
        assert_eq!(
            f.evaluate_inverse(&[c(0.0, 0.0)], 1e-12).unwrap(),
            vec![c(0.0, 0.0)]
        );
        let x = f.evaluate_inverse(&[c(0.09, 0.0)], 1e-12).unwrap();
        assert!((x[0] - c(0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = with_higher();
        let x = [c(0.03, -0.02), c(0.04, 0.01)];
        let jac = g.jacobian(&x);
        let h = 1e-7;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += c(h, 0.0);
            xm[k] -= c(h, 0.0);
            let fp = g.evaluate(&xp);
            let fm = g.evaluate(&xm);
            for i in 0..2 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((jac[i][k] - fd).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn power_image_examples() {
        let f = quadratic();
        assert_eq!(f.power_image(&[c(0.1, 0.0)], &[0]).unwrap(), c(1.0, 0.0));
        assert!((f.power_image(&[c(0.1, 0.0)], &[1]).unwrap() - c(0.09, 0.0)).norm() < 1e-17);
        let g = worked();
        let v = g.power_image(&[c(0.1, 0.0), c(0.1, 0.0)], &[1, 1]).unwrap();
        assert!((v - c(0.0995 * 0.0995, 0.0)).norm() < 1e-18);
        assert!(matches!(
            g.power_image(&[c(0.0, 0.0), c(0.1, 0.0)], &[-1, 1]),
            Err(Error::ZeroCoordinate { index: 0 })
        ));
    }

    #[test]
    fn generator_examples() {
        assert_eq!(
            worked().infinitesimal_generator(&[c(0.0, 0.0); 2]),
            vec![c(0.0, 0.0); 2]
        );
        let v = quadratic().infinitesimal_generator(&[c(0.1, 0.0)]);
        assert!((v[0] - c(-0.01, 0.0)).norm() < 1e-17);
        let v = worked().infinitesimal_generator(&[c(0.1, 0.0), c(0.2, 0.0)]);
        assert!((v[0] - c(-0.001, 0.0)).norm() < 1e-17);
        assert!((v[1] - c(-0.002, 0.0)).norm() < 1e-17);
    }

    #[test]
    fn orbit_examples() {
        let g = worked();
        let rec = g.orbit(&[c(0.0, 0.0); 2], 10, 1.0, None);
        assert!(!rec.escaped);
        assert!(rec.points.iter().all(|p| p.iter().all(|v| v.norm() == 0.0)));

        let rec = quadratic().orbit(&[c(0.1, 0.0)], 10_000, 1.0, None);
        assert!(!rec.escaped);
        let last = rec.points.last().unwrap()[0];
        assert!((last * 10_000.0 - c(1.0, 0.0)).norm() < 2e-3);

        let b = Germ::model(vec![1, 1], vec![c(-2.0, 0.0), c(1.0, 0.0)]).unwrap();
        let rec = b.orbit(&[c(0.05, 0.0), c(0.05, 0.0)], 100_000, 0.1, None);
        assert!(rec.escaped);
        let k = rec.escape_index.unwrap();
        assert_eq!(rec.points.len(), k + 1);
    }

    #[test]
    fn double_double_orbit_tracks_binary64() {
        let g = with_higher();
        let x = [c(0.01, 0.002), c(0.012, -0.003)];
        let a = g.orbit(&x, 2000, 1.0, None);
        let b = g.orbit_with_precision(&x, 2000, 1.0, None, Precision::DoubleDouble);
        let (p, q) = (a.points.last().unwrap(), b.points.last().unwrap());
        for i in 0..2 {
            assert!((p[i] - q[i]).norm() <= 1e-12 * q[i].norm());
        }
    }

    #[test]
    fn backward_germ_inverts_forward_step() {
        let g = with_higher();
        let back = BackwardGerm::new(&g);
        let x = [c(0.01, 0.003), c(-0.008, 0.011)];
        let y = back.from_original(&g.evaluate(&x));
        let (prev, s) = back.step(&y).unwrap();
        let prev_x = back.to_original(&prev);
        for i in 0..2 {
            assert!((prev_x[i] - x[i]).norm() < 1e-15);
            assert!((prev[i] - y[i] * (1.0 + s[i])).norm() < 1e-16);
        }
        let ym = monomial_value(g.multi_index(), &y);
        for i in 0..2 {
            let lead = s[i] / ym;
            assert!((lead - g.a()[i]).norm() < 0.1);
        }
    }

    fn small_point(n: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-1e-2f64..1e-2, -1e-2f64..1e-2), n)
            .prop_map(|v| v.into_iter().map(|(r, i)| c(r, i)).collect())
    }

    fn random_germ() -> impl Strategy<Value = Germ> {
        (
            prop::collection::vec(0u32..3, 3),
            prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 3),
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
        )
            .prop_filter_map("needs a positive exponent and non-zero a", |(m, a, h)| {
                if m.iter().all(|&e| e == 0) {
                    return None;
                }
                let a: Vec<C64> = a.into_iter().map(|(r, i)| c(r, i)).collect();
                if a.iter().any(|v| v.norm() < 1e-3) {
                    return None;
                }
                let higher = h
                    .into_iter()
                    .enumerate()
                    .map(|(i, (r, im))| {
                        let mut e = vec![0; 3];
                        e[i] = 1;
                        TruncatedPoly::new(
                            3,
                            1,
                            vec![Monomial {
                                exponent: e,
                                coeff: c(r, im),
                            }],
                        )
                        .unwrap()
                    })
                    .collect();
                Germ::new(m, a, higher, 0.02).ok()
            })
    }

    proptest! {
        #[test]
        fn inverse_round_trip(g in random_germ(), x in small_point(3)) {
            let tol = 1e-12;
            let y = g.evaluate(&x);
            let back = g.evaluate_inverse(&y, tol).unwrap();
            for i in 0..3 {
                prop_assert!((back[i] - x[i]).norm() <= 10.0 * tol * x[i].norm().max(1e-300));
            }
            let again = g.evaluate(&g.evaluate_inverse(&x, tol).unwrap());
            for i in 0..3 {
                prop_assert!((again[i] - x[i]).norm() <= 10.0 * tol * x[i].norm());
            }
        }

        #[test]
        fn normalize_is_idempotent_and_normalizes(g in random_germ()) {
            prop_assume!(g.pairing().norm() > 1e-3);
            let (h, _) = normalize(&g).unwrap();
            prop_assert!((h.pairing() + 1.0).norm() <= pairing_tolerance(&h));
            let (h2, alpha2) = normalize(&h).unwrap();
            prop_assert_eq!(&h2, &h);
            prop_assert!(alpha2.iter().all(|v| *v == c(1.0, 0.0)));
        }

        #[test]
        fn power_image_of_reduced_index(g in random_germ(), x in small_point(3)) {
            let m = g.multi_index().to_vec();
            let d = m.iter().copied().filter(|&e| e > 0).fold(0u32, num_integer::gcd);
            let reduced: Vec<i64> = m.iter().map(|&e| i64::from(e / d)).collect();
            let full: Vec<i64> = m.iter().map(|&e| i64::from(e)).collect();
            let lhs = g.power_image(&x, &reduced).unwrap().powu(d);
            let rhs = g.power_image(&x, &full).unwrap();
            let total: i64 = full.iter().sum::<i64>() + i64::from(d);
            prop_assert!((lhs - rhs).norm() <= 4.0 * total as f64 * f64::EPSILON * rhs.norm());
        }

        #[test]
        fn one_step_expansion_of_shadow(x in small_point(2)) {
            let g = with_higher();
            let (h, _) = normalize(&g).unwrap();
            let m = [1i64, 2];
            let xm = monomial_value(&[1, 2], &x);
            let lhs = h.power_image(&x, &m).unwrap();
            let model = xm * (1.0 - xm);
            let size = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            // C1 = 10 covers |m| * (l1 norm of A) plus the quadratic remainder
            prop_assert!((lhs - model).norm() <= 10.0 * xm.norm() * xm.norm() * size);
        }
    }
}
