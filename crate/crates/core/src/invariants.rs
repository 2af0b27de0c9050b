//! The invariant functions `ψ_I = g_I · u_I`.
//!
//! `g_I(x) = x^I (x^m)^{λ_I}` is a first integral of the model vector field;
//! `u_I` is the orbit product of `g_I(f(y)) / g_I(y)`. The logarithm of each
//! factor equals `Σ_i c_i log(1 + t_i)` with `c = I + λ_I m`, which is
//! accumulated with compensated summation. Truncation is controlled by the
//! bound
//!
//! `|log factor at step j| <= L_I c^{1+σ} (j + 1/|x^M|)^{-(1+σ)}`
//!
//! built from the fitted constants. Optional Wynn ε extrapolation over
//! geometric checkpoints replaces it by an empirical error estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{branch_log_xm, in_u, log_xm_principal, PetalSpec};
use crate::error::{Error, Result};
use crate::germ::{weighted_log_factor, Dynamics};
use crate::lattice::{lambda_of, LatticeData};
use crate::numeric::{CompensatedSum, C64};
use crate::precision::{DdComplex, Precision};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantEval {
    pub value: C64,
    pub u_value: C64,
    pub terms_used: usize,
    /// Truncation (or extrapolation) error plus a rounding allowance.
    pub tail_bound: f64,
    pub index: Vec<i64>,
    pub ell: usize,
    /// True when the value comes from extrapolation rather than the
    /// rigorous-under-fit tail bound.
    pub extrapolated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsiOptions {
    pub budget: usize,
    pub extrapolate: bool,
    pub precision: Precision,
}

impl Default for PsiOptions {
    fn default() -> Self {
        Self {
            budget: 10_000_000,
            extrapolate: true,
            precision: Precision::Binary64,
        }
    }
}

/// `g_I(x) = x^I (x^m)^{λ_I}` on branch `ℓ`.
pub fn g_i(x: &[C64], index: &[i64], ell: usize, a: &[C64], lat: &LatticeData) -> Result<C64> {
    let lam = lambda_of(index, a, lat.d);
    let log_xm = branch_log_xm(x, ell, lat)?;
    let mut acc = lam * log_xm;
    for (i, (xi, &e)) in x.iter().zip(index).enumerate() {
        if e == 0 {
            continue;
        }
        if *xi == C64::new(0.0, 0.0) {
            if e < 0 {
                return Err(Error::ZeroCoordinate { index: i });
            }
            return Ok(C64::new(0.0, 0.0));
        }
        acc += xi.ln() * e as f64;
    }
    Ok(acc.exp())
}

/// Weights `c_i = I_i + λ_I m_i` of the per-step log factor.
pub fn factor_weights(index: &[i64], a: &[C64], lat: &LatticeData) -> Vec<C64> {
    let lam = lambda_of(index, a, lat.d);
    index
        .iter()
        .zip(&lat.m)
        .map(|(&i, &mi)| C64::new(i as f64, 0.0) + lam * f64::from(mi))
        .collect()
}

/// Bound on `Σ_{j >= 0} |log factor_j|` for an orbit whose current point has
/// `|x^M| = big`, and for one that has already made `j` steps from a start
/// with `|x^M| = big0`.
struct TailModel {
    scale: f64,
    sigma: f64,
}

impl TailModel {
    fn remaining(&self, offset: f64) -> f64 {
        let s = self.sigma;
        self.scale * (offset.powf(-(1.0 + s)) + offset.powf(-s) / s)
    }

    fn bound(&self, j: usize, big0: f64, big_now: f64) -> f64 {
        let from_start = self.remaining(j as f64 + 1.0 / big0);
        let restart = self.remaining(1.0 / big_now);
        from_start.min(restart)
    }
}

struct OrbitCursor<'a> {
    dynamics: &'a dyn Dynamics,
    x: Vec<C64>,
    dd: Option<Vec<DdComplex>>,
}

impl OrbitCursor<'_> {
    fn advance(&mut self) -> Result<Vec<C64>> {
        let (next, t) = self.dynamics.step(&self.x)?;
        match self.dd.as_mut() {
            Some(dd) => {
                let nd = self
                    .dynamics
                    .step_dd(dd)
                    .ok_or(Error::PreconditionViolated(
                        "extended precision is not available for this map".into(),
                    ))?;
                self.x = nd.iter().map(|v| v.to_c64()).collect();
                *dd = nd;
            }
            None => self.x = next,
        }
        Ok(t)
    }
}

/// Even columns of Wynn's ε table at the newest entry of `seq`, from the
/// raw sequence up to the deepest column the data supports.
fn wynn_estimates(seq: &[C64]) -> Vec<C64> {
    let mut out = Vec::new();
    let Some(&last) = seq.last() else { return out };
    out.push(last);
    let mut prev = vec![C64::new(0.0, 0.0); seq.len() + 1];
    let mut cur = seq.to_vec();
    let mut column = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            if diff.norm() == 0.0 {
                return out;
            }
            next.push(prev[i + 1] + diff.inv());
        }
        prev = std::mem::replace(&mut cur, next);
        column += 1;
        if column % 2 == 0 {
            match cur.last() {
                Some(v) if v.is_finite() => out.push(*v),
                _ => return out,
            }
        }
    }
    out
}

/// `ψ_I(x)` for `x ∈ U_ℓ`, with `tail_bound <= tol` (absolute, on `ψ`).
#[allow(clippy::too_many_arguments)]
pub fn psi_i(
    x: &[C64],
    index: &[i64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<InvariantEval> {
    if in_u(x, spec, lat) != Some(ell) {
        return Err(Error::OutsidePetal { ell });
    }
    let a = dynamics.leading();
    let g = g_i(x, index, ell, a, lat)?;
    let weights = factor_weights(index, a, lat);
    let log_g = g.norm().ln().abs() + std::f64::consts::PI;
    let done = |u: C64, terms: usize, tail: f64, extrapolated: bool| InvariantEval {
        value: g * u,
        u_value: u,
        terms_used: terms,
        tail_bound: tail + 4.0 * f64::EPSILON * (g * u).norm() * (2.0 + log_g + u.ln().norm()),
        index: index.to_vec(),
        ell,
        extrapolated,
    };
    if weights.iter().all(|c| c.norm() <= 1e-14) {
        return Ok(done(C64::new(1.0, 0.0), 0, 0.0, false));
    }
    let l_bound = spec
        .constants
        .l_bound
        .ok_or(Error::Uncalibrated("l_bound"))?;
    let c = spec.constants.c.ok_or(Error::Uncalibrated("c"))?;
    let index_weight: f64 = index.iter().map(|&v| (v as f64).abs()).sum();
    let sigma = spec.factor_exponent;
    let tail = TailModel {
        scale: l_bound * index_weight * c.powf(1.0 + sigma),
        sigma,
    };
    let d = lat.d as f64;
    let big_of = |p: &[C64]| log_xm_principal(p, lat).map_or(0.0, |l| (l.re * d).exp());
    let big0 = big_of(x);
    let g_abs = g.norm();

    let mut cursor = OrbitCursor {
        dynamics,
        x: x.to_vec(),
        dd: matches!(opts.precision, Precision::DoubleDouble)
            .then(|| x.iter().map(|&v| v.into()).collect()),
    };
    let mut sum = CompensatedSum::new();
    let mut checkpoints: Vec<C64> = Vec::new();
    let mut next_checkpoint = (1.0 / big0).ceil().max(64.0) as usize;
    let mut previous_best: Option<C64> = None;
    let mut j = 0usize;
    loop {
        if j.is_multiple_of(32) || j == next_checkpoint {
            let bound = tail.bound(j, big0, big_of(&cursor.x));
            let u = sum.value().exp();
            let psi_err = g_abs * u.norm() * bound.exp_m1();
            if psi_err <= tol {
                return Ok(done(u, j, psi_err, false));
            }
        }
        if opts.extrapolate && j == next_checkpoint {
            checkpoints.push(sum.value());
            next_checkpoint = 2 * next_checkpoint + (1.0 / big0).ceil() as usize;
            let est = wynn_estimates(&checkpoints);
            if let [.., second, best] = est[..] {
                let floor = f64::EPSILON * sum.value().norm().max(1.0);
                let spread = (best - second)
                    .norm()
                    .max(previous_best.map_or(f64::INFINITY, |p| (best - p).norm()));
                previous_best = Some(best);
                let u = best.exp();
                let err = g_abs * u.norm() * spread.max(floor);
                if err <= tol {
                    return Ok(done(u, j, err, true));
                }
            }
        }
        let hopeless = j.is_multiple_of(32)
            && (!opts.extrapolate || next_checkpoint > opts.budget)
            && g_abs
                * sum.value().exp().norm()
                * tail.remaining(opts.budget as f64 + 1.0 / big0).exp_m1()
                > 10.0 * tol;
        if j >= opts.budget || hopeless {
            let bound = tail.bound(j, big0, big_of(&cursor.x));
            return Err(Error::NoConvergence {
                what: "psi_i",
                iterations: j,
                residual: g_abs * sum.value().exp().norm() * bound.exp_m1(),
            });
        }
        let t = cursor.advance()?;
        sum.add(weighted_log_factor(&weights, &t));
        j += 1;
    }
}

/// `ψ_i = ψ_{𝓜_i}` for rows `2..n` of 𝓜.
pub fn psi_basis(
    x: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<Vec<InvariantEval>> {
    lat.basis_rows()
        .iter()
        .map(|row| psi_i(x, row, ell, dynamics, lat, spec, tol, opts))
        .collect()
}

/// Accuracy of `u_I` in the deviation fit, relative to `|x^m|^γ`.
const DEVIATION_REL_TOL: f64 = 1e-3;

/// Smallest `κ` with `|u_I(x) - 1| <= κ |x^m|^γ` over the sample, maximized
/// over the basis rows of 𝓜. Points whose product does not converge within
/// the iteration budget are skipped; `None` when no point converges.
pub fn u_deviation_fit(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    sample: &[Vec<C64>],
) -> Result<Option<f64>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let rows: Vec<Vec<i64>> = lat.basis_rows().to_vec();
    u_deviation_fit_rows(dynamics, lat, spec, sample, &rows, PsiOptions::default())
}

pub fn u_deviation_fit_rows(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    sample: &[Vec<C64>],
    rows: &[Vec<i64>],
    opts: PsiOptions,
) -> Result<Option<f64>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let fits: Vec<Result<Option<f64>>> = sample
        .par_iter()
        .map(|x| {
            let ell = in_u(x, spec, lat).ok_or(Error::OutsidePetal { ell: 0 })?;
            let xm_gamma = log_xm_principal(x, lat).map_or(0.0, |l| (l.re * spec.gamma).exp());
            let mut worst: f64 = 0.0;
            for row in rows {
                let g = g_i(x, row, ell, dynamics.leading(), lat)?.norm();
                let tol = DEVIATION_REL_TOL * xm_gamma * g;
                let ev = match psi_i(x, row, ell, dynamics, lat, spec, tol, opts) {
                    Ok(ev) => ev,
                    Err(Error::NoConvergence { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                worst = worst.max(((ev.u_value - 1.0).norm() + ev.tail_bound / g) / xm_gamma);
            }
            Ok(Some(worst))
        })
        .collect();
    let mut kappa: Option<f64> = None;
    for f in fits {
        if let Some(v) = f? {
            kappa = Some(kappa.map_or(v, |k| k.max(v)));
        }
    }
    Ok(kappa)
}
