//! Effective choice of the petal parameters.
//!
//! `ε` and `δ` are halved until one step of the map preserves a quasi-random
//! sample of `U` (resp. `D`) with a strictly positive decay rate; the other
//! constants are then fitted on the accepted sample with a safety factor of
//! two (upper bounds doubled, lower bounds halved).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{sample_d, sample_d_tilde_band, sample_u, USampling};
use super::{d_component, in_u, log_xm_principal, FittedConstants, PetalSpec, SectorSpec};
use crate::error::{Error, Result};
use crate::germ::{Dynamics, Germ};
use crate::invariants::PsiOptions;
use crate::lattice::LatticeData;
use crate::numeric::{expm1, log1p, C64};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PetalOverrides {
    pub epsilon: Option<f64>,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub delta_prime: Option<f64>,
    pub r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub theta: f64,
    /// Sample size per component for the invariance checks.
    pub samples: usize,
    pub depth_decades: f64,
    pub seed: u64,
    pub epsilon_start: f64,
    pub epsilon_floor: f64,
    pub fit_orbits: usize,
    pub fit_orbit_len: usize,
    /// Sample size for the fits that need invariant functions or charts.
    pub chart_samples: usize,
    /// Options for the invariant functions evaluated by those fits; points
    /// whose products exhaust the budget are left out.
    pub psi: PsiOptions,
    pub overrides: PetalOverrides,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            theta: FRAC_PI_4,
            samples: 10_000,
            depth_decades: 4.0,
            seed: 0,
            epsilon_start: 0.5,
            epsilon_floor: 1e-12,
            fit_orbits: 64,
            fit_orbit_len: 4000,
            chart_samples: 128,
            psi: PsiOptions {
                budget: 1_000_000,
                ..Default::default()
            },
            overrides: PetalOverrides::default(),
        }
    }
}

/// Half the largest opening for which every `Re(e^{iφ} a_i)` and every
/// `Re(e^{iφ}(a_i + γ/d))` stays negative, capped by the requested `θ`.
pub fn effective_theta(a: &[C64], gamma_over_d: f64, theta: f64) -> f64 {
    let slack = a
        .iter()
        .flat_map(|ai| {
            [
                FRAC_PI_2 - (-ai).arg().abs(),
                FRAC_PI_2 - (-(ai + gamma_over_d)).arg().abs(),
            ]
        })
        .fold(f64::INFINITY, f64::min);
    theta.min(0.5 * slack)
}

/// Per-step contraction of `|x_i| / |x^m|^γ`, in units of `|x^M|`.
fn u_decay(t: &[C64], lat: &LatticeData, gamma: f64, big: f64) -> f64 {
    let shadow: f64 = t
        .iter()
        .zip(&lat.m)
        .map(|(ti, &mi)| f64::from(mi) * log1p(*ti).re)
        .sum();
    t.iter()
        .map(|ti| -(log1p(*ti).re - gamma * shadow).exp_m1() / big)
        .fold(f64::INFINITY, f64::min)
}

/// Decay rate `min_i (1 - r_i) / |x^M|` over one step, where `r_i` is the
/// ratio of `|x_i| / |x^m|^γ` after and before the step.
pub fn eta_rate(dynamics: &dyn Dynamics, x: &[C64], lat: &LatticeData, gamma: f64) -> Result<f64> {
    let (_, t) = dynamics.step(x)?;
    Ok(u_decay(&t, lat, gamma, big_modulus(x, lat)))
}

fn big_modulus(x: &[C64], lat: &LatticeData) -> f64 {
    log_xm_principal(x, lat).map_or(0.0, |l| (l.re * lat.d as f64).exp())
}

enum Check {
    Pass(f64),
    Fail(Vec<C64>),
}

fn check_u(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    cfg: &CalibrationConfig,
) -> Check {
    let shape = USampling {
        depth_decades: cfg.depth_decades,
        margin: 0.0,
    };
    let mut worst = f64::INFINITY;
    for ell in 0..lat.d as usize {
        let pts = sample_u(
            lat,
            spec,
            ell,
            cfg.samples,
            cfg.seed.wrapping_add(ell as u64),
            shape,
        );
        let results: Vec<Option<f64>> = pts
            .par_iter()
            .map(|x| {
                let (fx, t) = dynamics.step(x).ok()?;
                if in_u(&fx, spec, lat) != Some(ell) {
                    return None;
                }
                let eta = u_decay(&t, lat, spec.gamma, big_modulus(x, lat));
                (eta > 0.0 && eta.is_finite()).then_some(eta)
            })
            .collect();
        for (x, r) in pts.iter().zip(&results) {
            match r {
                Some(eta) => worst = worst.min(*eta),
                None => return Check::Fail(x.clone()),
            }
        }
    }
    Check::Pass(worst)
}

fn check_d(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    cfg: &CalibrationConfig,
) -> Check {
    let pts = sample_d(
        lat,
        spec,
        spec.delta,
        cfg.samples,
        cfg.seed ^ 0xD,
        cfg.depth_decades,
    );
    let results: Vec<Option<f64>> = pts
        .par_iter()
        .map(|x| {
            let comp = d_component(x, spec, lat, false)?;
            let (fx, t) = dynamics.step(x).ok()?;
            if d_component(&fx, spec, lat, false) != Some(comp) {
                return None;
            }
            let big = big_modulus(x, lat);
            let rho = t
                .iter()
                .map(|ti| -log1p(*ti).re.exp_m1() / big)
                .fold(f64::INFINITY, f64::min);
            (rho > 0.0 && rho.is_finite()).then_some(rho)
        })
        .collect();
    let mut worst = f64::INFINITY;
    for (x, r) in pts.iter().zip(&results) {
        match r {
            Some(rho) => worst = worst.min(*rho),
            None => return Check::Fail(x.clone()),
        }
    }
    Check::Pass(worst)
}

/// Calibrates `ε, θ, γ, δ, δ'` and the orbit-level constants for any map of
/// the germ form. The chart radius `r` is set to its model value
/// `0.9 e^{-max|Im a| θ}`; [`calibrate_petal`] refines it.
pub fn calibrate_petal_for(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    trusted_radius: f64,
    cfg: &CalibrationConfig,
) -> Result<PetalSpec> {
    let a = dynamics.leading();
    let pairing: C64 = a
        .iter()
        .zip(dynamics.multi_index())
        .map(|(ai, &mi)| ai * f64::from(mi))
        .sum();
    if (pairing + 1.0).norm() > 1e-12 {
        return Err(Error::PreconditionViolated(format!(
            "germ is not normalized: <a,M> = {pairing}"
        )));
    }
    if let Some(i) = a.iter().position(|ai| ai.re >= 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "Re(a_{i}) = {} is not negative",
            a[i].re
        )));
    }
    if cfg.samples == 0 {
        return Err(Error::EmptySample);
    }
    let d = lat.d as f64;
    let min_re = a.iter().map(|ai| -ai.re).fold(f64::INFINITY, f64::min);
    let gamma = cfg.overrides.gamma.unwrap_or(0.5 * d * min_re);
    let theta_req = cfg.overrides.theta.unwrap_or(cfg.theta);
    let theta = if cfg.overrides.theta.is_some() {
        theta_req
    } else {
        effective_theta(a, gamma / d, theta_req)
    };
    let r0 = 0.9 * (-a.iter().map(|ai| ai.im.abs()).fold(0.0, f64::max) * theta).exp();
    let mut spec = PetalSpec {
        sector: SectorSpec::new(cfg.epsilon_start, theta)?,
        gamma,
        delta: 0.5 * trusted_radius.min(1.0),
        delta_prime: 0.125 * trusted_radius.min(1.0),
        r: cfg.overrides.r.unwrap_or(r0),
        factor_exponent: 1.0,
        constants: FittedConstants::default(),
    };
    spec.validate(a, lat)?;

    // U lies in the polydisc of radius ε^{γ/d}; keep it inside the trusted one.
    let trusted_eps = trusted_radius.powf(d / gamma) * 0.9;
    let mut eps = cfg
        .overrides
        .epsilon
        .unwrap_or(cfg.epsilon_start.min(trusted_eps));
    let eta = loop {
        spec.sector.epsilon = eps;
        match check_u(dynamics, lat, &spec, cfg) {
            Check::Pass(eta) => break eta,
            Check::Fail(witness) => {
                if cfg.overrides.epsilon.is_some() || eps * 0.5 < cfg.epsilon_floor {
                    return Err(Error::CalibrationFailed {
                        reason: format!("U is not invariant at epsilon = {eps:e}"),
                        witness: Some(witness),
                    });
                }
                eps *= 0.5;
            }
        }
    };

    let mut delta = cfg.overrides.delta.unwrap_or(0.5 * trusted_radius.min(1.0));
    let rho = loop {
        spec.delta = delta;
        spec.delta_prime = delta;
        match check_d(dynamics, lat, &spec, cfg) {
            Check::Pass(rho) => break rho,
            Check::Fail(witness) => {
                if cfg.overrides.delta.is_some() || delta * 0.5 < cfg.epsilon_floor {
                    return Err(Error::CalibrationFailed {
                        reason: format!("D is not invariant at delta = {delta:e}"),
                        witness: Some(witness),
                    });
                }
                delta *= 0.5;
            }
        }
    };
    spec.delta_prime = cfg.overrides.delta_prime.unwrap_or(0.25 * delta);
    spec.validate(a, lat)?;
    spec.constants.eta = Some(0.5 * eta);
    spec.constants.rho = Some(0.5 * rho);

    let polynomial_free = dynamics_is_model(dynamics);
    spec.factor_exponent = if polynomial_free { 1.0 } else { spec.s(lat) };
    fit_orbit_constants(dynamics, lat, &mut spec, cfg);
    Ok(spec)
}

/// Whether one step of the map coincides with its model `A = 0` at a few
/// probe points (true for germs without higher-order terms).
pub fn dynamics_is_model(dynamics: &dyn Dynamics) -> bool {
    let n = dynamics.dim();
    let probes = [
        (0..n)
            .map(|i| C64::new(0.013 + 0.001 * i as f64, 0.004))
            .collect::<Vec<_>>(),
        (0..n)
            .map(|i| C64::new(-0.002, 0.011 - 0.0007 * i as f64))
            .collect::<Vec<_>>(),
    ];
    probes.iter().all(|x| {
        let xm: C64 = x
            .iter()
            .zip(dynamics.multi_index())
            .map(|(xi, &e)| xi.powu(e))
            .product();
        match dynamics.step(x) {
            Ok((_, t)) => t
                .iter()
                .zip(dynamics.leading())
                .all(|(ti, ai)| (ti - xm * ai).norm() <= 1e-13 * (xm * ai).norm()),
            Err(_) => false,
        }
    })
}

fn fit_orbit_constants(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &mut PetalSpec,
    cfg: &CalibrationConfig,
) {
    let shape = USampling {
        depth_decades: cfg.depth_decades,
        margin: 0.0,
    };
    let sigma = spec.factor_exponent;
    let d = lat.d as f64;
    let s = spec.s(lat);
    let big_m: Vec<f64> = lat.m.iter().map(|&v| f64::from(v) * d).collect();
    let mut k_fit: f64 = 0.0;
    let mut l_fit: f64 = 0.0;
    let mut c_fit: f64 = 1.0;
    for ell in 0..lat.d as usize {
        let pts = sample_u(
            lat,
            spec,
            ell,
            cfg.samples,
            cfg.seed.wrapping_add(ell as u64),
            shape,
        );
        let per_point: Vec<(f64, f64)> = pts
            .par_iter()
            .filter_map(|x| {
                let (_, t) = dynamics.step(x).ok()?;
                let big = big_modulus(x, lat);
                let logs: Vec<C64> = t.iter().map(|ti| log1p(*ti)).collect();
                let z_mod = 1.0 / big;
                let sum: C64 = logs.iter().zip(&big_m).map(|(l, mi)| l * *mi).sum();
                let lxm = log_xm_principal(x, lat)?;
                let z = (-lxm * d).exp();
                let h = z * expm1(-sum) - 1.0;
                let shadow: C64 = logs
                    .iter()
                    .zip(&lat.m)
                    .map(|(l, &mi)| l * f64::from(mi))
                    .sum();
                let q = logs
                    .iter()
                    .zip(dynamics.leading())
                    .map(|(l, ai)| (l + ai * d * shadow).norm())
                    .fold(0.0, f64::max);
                Some((h.norm() * z_mod.powf(s), q / big.powf(1.0 + sigma)))
            })
            .collect();
        for (kv, lv) in per_point {
            k_fit = k_fit.max(kv);
            l_fit = l_fit.max(lv);
        }
        let orbit_pts: Vec<&Vec<C64>> = pts
            .iter()
            .step_by((pts.len() / cfg.fit_orbits.max(1)).max(1))
            .collect();
        let ratios: Vec<f64> = orbit_pts
            .par_iter()
            .map(|x| {
                let big0 = big_modulus(x, lat);
                let mut cur = (*x).clone();
                let mut worst: f64 = 1.0;
                for j in 1..=cfg.fit_orbit_len {
                    let Ok((next, _)) = dynamics.step(&cur) else {
                        break;
                    };
                    cur = next;
                    let bj = big_modulus(&cur, lat);
                    worst = worst.max(bj * (1.0 + j as f64 * big0) / big0);
                }
                worst
            })
            .collect();
        c_fit = ratios.into_iter().fold(c_fit, f64::max);
    }
    spec.constants.k = Some(2.0 * k_fit);
    spec.constants.l_bound = Some(2.0 * l_fit);
    spec.constants.c = Some(2.0 * c_fit);

    let band = sample_d_tilde_band(
        lat,
        spec,
        cfg.fit_orbits.max(16) * 4,
        cfg.seed ^ 0xC,
        cfg.depth_decades.min(2.0),
    );
    let entry: Vec<f64> = band
        .par_iter()
        .filter_map(|x| {
            let big0 = big_modulus(x, lat);
            let mut cur = x.clone();
            for j in 1..=100_000usize {
                cur = dynamics.step(&cur).ok()?.0;
                if d_component(&cur, spec, lat, false).is_some() {
                    return Some(j as f64 * big0);
                }
            }
            None
        })
        .collect();
    if !entry.is_empty() {
        spec.constants.c_big = Some(2.0 * entry.into_iter().fold(0.0, f64::max));
    }
}

/// Full calibration for a germ: [`calibrate_petal_for`], then the chart
/// radius `r`, the derivative constant `K'` and the deviation constant `κ`.
pub fn calibrate_petal(g: &Germ, lat: &LatticeData, cfg: &CalibrationConfig) -> Result<PetalSpec> {
    let mut spec = calibrate_petal_for(g, lat, g.trusted_radius(), cfg)?;
    if cfg.overrides.r.is_none() {
        crate::fatou::calibrate_chart_radius(g, lat, &mut spec, cfg)?;
    }
    let sample =
        crate::fatou::sample_chart_points(g, lat, &spec, 0, cfg.chart_samples, cfg.seed ^ 0xF)?;
    if !sample.is_empty() {
        spec.constants.k_prime =
            crate::fatou::htilde_derivative_check_with(g, lat, &spec, 0, &sample, cfg.psi)?;
    }
    if lat.n() > 1 {
        let shape = USampling {
            depth_decades: cfg.depth_decades,
            margin: 0.0,
        };
        let pts = sample_u(lat, &spec, 0, cfg.chart_samples, cfg.seed ^ 0x6, shape);
        let rows = lat.basis_rows().to_vec();
        spec.constants.kappa =
            crate::invariants::u_deviation_fit_rows(g, lat, &spec, &pts, &rows, cfg.psi)?;
    }
    Ok(spec)
}
