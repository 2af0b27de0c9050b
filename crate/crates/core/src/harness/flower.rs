//! The one-dimensional flower: sector invariance, the orbit bound
//! `|f^j(z)|^p <= c |z|^p / (1 + |a| j |z|^p)`, the limit of `j f^j(z)^p`
//! and the entry time from the enlarged sector.

use std::f64::consts::{FRAC_PI_2, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::domains::{calibrate_petal_for, in_s, in_s_tilde, SectorSpec};
use crate::error::{Error, Result};
use crate::germ::{BackwardGerm, Dynamics, Germ};
use crate::lattice::LatticeData;
use crate::numeric::C64;
use crate::sampling::Halton;

/// One row of the traced orbit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub j: usize,
    pub re: f64,
    pub im: f64,
    /// `|z_j|^p · j`.
    pub scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowerReport {
    pub p: u32,
    /// Coefficient of `f(z) = z + (a/p) z^{p+1} + ...`.
    pub a: C64,
    pub sector: SectorSpec,
    pub net_points: usize,
    pub invariance_violations: usize,
    pub c_fit: f64,
    pub bound_checked: usize,
    pub bound_violations: usize,
    pub c_big_fit: f64,
    pub reentry_checked: usize,
    pub reentry_violations: usize,
    pub limit: C64,
    pub limit_target: C64,
    /// `|j f^j(z)^p - target| / |target|` at the last step.
    pub limit_error: f64,
    pub forward_components: usize,
    pub backward_components: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl FlowerReport {
    pub fn passed(&self) -> bool {
        self.invariance_violations == 0
            && self.bound_violations == 0
            && self.reentry_violations == 0
            && self.forward_components == self.p as usize
            && self.backward_components == self.p as usize
            && self.limit_error < 1e-2
    }
}

struct NetOrbit {
    start_big: f64,
    invariance_ok: bool,
    bound_ratio: f64,
    entry: Option<usize>,
    in_band: bool,
}

fn net_orbit(
    g: &Germ,
    z0: C64,
    a: C64,
    p: u32,
    sector: &SectorSpec,
    steps: usize,
) -> Option<NetOrbit> {
    let component = in_s_tilde(z0, a, p, sector)?;
    let big0 = z0.norm().powi(p as i32);
    let in_band = in_s(z0, a, p, sector).is_none();
    let mut z = vec![z0];
    let mut invariance_ok = true;
    let mut bound_ratio: f64 = 1.0;
    let mut entry = (!in_band).then_some(0);
    for j in 1..=steps {
        z = g.step(&z).ok()?.0;
        if in_s_tilde(z[0], a, p, sector) != Some(component) {
            invariance_ok = false;
            break;
        }
        if entry.is_none() && in_s(z[0], a, p, sector) == Some(component) {
            entry = Some(j);
        }
        let big = z[0].norm().powi(p as i32);
        bound_ratio = bound_ratio.max(big * (1.0 + a.norm() * j as f64 * big0) / big0);
    }
    Some(NetOrbit {
        start_big: big0,
        invariance_ok,
        bound_ratio,
        entry,
        in_band,
    })
}

/// Net of `count` points per component of `S̃_a(ε, θ)` with
/// `|a z^p| < radius · ε`, in each of the `p` root directions.
fn sector_net(
    a: C64,
    p: u32,
    sector: &SectorSpec,
    radius: f64,
    count: usize,
    seed: u64,
) -> Vec<C64> {
    let halton = Halton::new(2, seed);
    let opening = sector.theta + FRAC_PI_2;
    let mut shadows = Vec::with_capacity(count);
    let mut k = 0u64;
    while shadows.len() < count && k < 64 * count as u64 {
        let u = halton.point(k);
        k += 1;
        let y = C64::from_polar(
            radius * sector.epsilon * u[0].sqrt(),
            opening * (2.0 * u[1] - 1.0),
        );
        if crate::domains::in_c_tilde(y, sector) {
            shadows.push(y);
        }
    }
    let pf = f64::from(p);
    let mut out = Vec::with_capacity(shadows.len() * p as usize);
    for comp in 0..p {
        for y in &shadows {
            let root = (y / -a).powf(1.0 / pf);
            let z = root * C64::from_polar(1.0, TAU * f64::from(comp) / pf);
            out.push(z);
        }
    }
    out
}

/// Counts the distinct sector components that capture orbits started on a
/// ring around the origin.
fn captured_components(
    dynamics: &dyn Dynamics,
    a: C64,
    p: u32,
    sector: &SectorSpec,
    ring: f64,
    steps: usize,
) -> usize {
    let count = 16 * p as usize;
    let mut seen: Vec<usize> = (0..count)
        .into_par_iter()
        .filter_map(|k| {
            let mut z = vec![C64::from_polar(ring, TAU * (k as f64 + 0.5) / count as f64)];
            for _ in 0..steps {
                if let Some(c) = in_s(z[0], a, p, sector) {
                    return Some(c);
                }
                z = dynamics.step(&z).ok()?.0;
                if !z[0].is_finite() || z[0].norm() > 1.0 {
                    return None;
                }
            }
            None
        })
        .collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Runs the one-dimensional flower checks for the germ of `cfg`.
pub fn verify_flower_1d(cfg: &ExperimentConfig) -> Result<FlowerReport> {
    let (g, _) = cfg.germ.build()?;
    if g.n() != 1 {
        return Err(Error::PreconditionViolated(format!(
            "flower1d needs n = 1, got n = {}",
            g.n()
        )));
    }
    let p = g.multi_index()[0];
    let a = g.a()[0] * f64::from(p);
    let lat = LatticeData::from_multi_index(g.multi_index())?;
    let spec = calibrate_petal_for(&g, &lat, g.trusted_radius(), &cfg.calibration)?;
    let sector = spec.sector;

    let net = sector_net(
        a,
        p,
        &sector,
        cfg.flower.net_radius,
        cfg.samples.flower,
        cfg.seed,
    );
    let orbits: Vec<Option<NetOrbit>> = net
        .par_iter()
        .map(|&z| net_orbit(&g, z, a, p, &sector, cfg.flower.net_steps))
        .collect();
    let orbits: Vec<NetOrbit> = orbits.into_iter().flatten().collect();
    let invariance_violations = orbits.iter().filter(|o| !o.invariance_ok).count();

    // Constants are fitted on even net points and checked on odd ones.
    let (fit, check): (Vec<_>, Vec<_>) = orbits.iter().enumerate().partition(|(k, _)| k % 2 == 0);
    let c_fit = 2.0 * fit.iter().map(|(_, o)| o.bound_ratio).fold(1.0, f64::max);
    let bound_violations = check.iter().filter(|(_, o)| o.bound_ratio > c_fit).count();
    let entry_scaled = |o: &NetOrbit| o.entry.map(|j| j as f64 * o.start_big);
    let c_big_fit = 2.0
        * fit
            .iter()
            .filter(|(_, o)| o.in_band)
            .filter_map(|(_, o)| entry_scaled(o))
            .fold(0.0, f64::max);
    let band: Vec<&NetOrbit> = check
        .iter()
        .map(|(_, o)| *o)
        .filter(|o| o.in_band)
        .collect();
    let reentry_violations = band
        .iter()
        .filter(|o| entry_scaled(o).is_none_or(|v| v > c_big_fit))
        .count();

    let mut z = vec![C64::new(cfg.flower.start[0], cfg.flower.start[1])];
    let pi = p as i32;
    let stride = (cfg.flower.steps / 1000).max(1);
    let mut trace = vec![TraceRow {
        j: 0,
        re: z[0].re,
        im: z[0].im,
        scaled: 0.0,
    }];
    for j in 1..=cfg.flower.steps {
        z = g.step(&z)?.0;
        if j <= 100 || j % stride == 0 || j == cfg.flower.steps {
            trace.push(TraceRow {
                j,
                re: z[0].re,
                im: z[0].im,
                scaled: z[0].norm().powi(pi) * j as f64,
            });
        }
    }
    let limit = z[0].powi(pi) * cfg.flower.steps as f64;
    let limit_target = -1.0 / a;
    let limit_error = (limit - limit_target).norm() / limit_target.norm();

    let ring = (cfg.flower.net_radius * sector.epsilon).powf(1.0 / f64::from(p));
    let forward_components = captured_components(&g, a, p, &sector, ring, cfg.flower.net_steps);
    let back = BackwardGerm::new(&g);
    let backward_components = captured_components(&back, a, p, &sector, ring, cfg.flower.net_steps);

    Ok(FlowerReport {
        p,
        a,
        sector,
        net_points: orbits.len(),
        invariance_violations,
        c_fit,
        bound_checked: check.len(),
        bound_violations,
        c_big_fit,
        reentry_checked: band.len(),
        reentry_violations,
        limit,
        limit_target,
        limit_error,
        forward_components,
        backward_components,
        trace,
    })
}
