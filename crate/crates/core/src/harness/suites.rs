//! Sample-based checks of petal invariance, invariant functions, the chart
//! inverse and the Fatou coordinate, each returning plain counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{
    dynamics_is_model, eta_rate, in_u, log_xm_principal, sample_u, PetalSpec, USampling,
};
use crate::error::{Error, Result};
use crate::fatou::{
    fatou_beta, ftilde, model_inverse, model_phi, phi_forward, phi_inverse, sample_chart_points,
    FatouChart, FatouOptions,
};
use crate::germ::Dynamics;
use crate::invariants::{psi_i, PsiOptions};
use crate::lattice::LatticeData;
use crate::numeric::C64;

fn seed_for(seed: u64, ell: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt)
        .wrapping_add(ell as u64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvarianceStats {
    pub ell: usize,
    pub samples: usize,
    /// Points whose image leaves `U_ℓ`.
    pub invariance_violations: usize,
    /// Points whose one-step decay rate falls below the calibrated `η`.
    pub eta_violations: usize,
    pub min_eta: f64,
    pub orbits: usize,
    pub orbit_steps: usize,
    /// Orbits that leave `U_ℓ` or break the fitted bound on `|x_j^M|`.
    pub orbit_violations: usize,
}

impl InvarianceStats {
    pub fn passed(&self) -> bool {
        self.invariance_violations == 0 && self.eta_violations == 0 && self.orbit_violations == 0
    }
}

/// `f(U_ℓ) ⊂ U_ℓ` and the decay rate `η` on a quasi-random sample of each
/// component, plus orbit convergence on the first `orbits` points.
pub fn invariance_suite(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    count: usize,
    orbits: usize,
    orbit_steps: usize,
    seed: u64,
) -> Result<Vec<InvarianceStats>> {
    let eta = spec.constants.eta.ok_or(Error::Uncalibrated("eta"))?;
    let c = spec.constants.c.ok_or(Error::Uncalibrated("c"))?;
    let d = lat.d as f64;
    let big_of = |x: &[C64]| log_xm_principal(x, lat).map_or(0.0, |l| (l.re * d).exp());
    let mut out = Vec::new();
    for ell in 0..lat.d as usize {
        let pts = sample_u(
            lat,
            spec,
            ell,
            count,
            seed_for(seed, ell, 0x1A),
            USampling::default(),
        );
        if pts.is_empty() {
            return Err(Error::EmptySample);
        }
        let rows: Vec<(bool, f64)> = pts
            .par_iter()
            .map(|x| {
                let inside = dynamics
                    .step(x)
                    .is_ok_and(|(fx, _)| in_u(&fx, spec, lat) == Some(ell));
                let rate = eta_rate(dynamics, x, lat, spec.gamma).unwrap_or(f64::NAN);
                (inside, rate)
            })
            .collect();
        let orbit_ok: Vec<bool> = pts
            .par_iter()
            .take(orbits)
            .map(|x| {
                let big0 = big_of(x);
                let mut cur = x.clone();
                for j in 1..=orbit_steps {
                    cur = match dynamics.step(&cur) {
                        Ok((next, _)) => next,
                        Err(_) => return false,
                    };
                    if in_u(&cur, spec, lat) != Some(ell)
                        || big_of(&cur) > c * big0 / (1.0 + j as f64 * big0)
                    {
                        return false;
                    }
                }
                true
            })
            .collect();
        out.push(InvarianceStats {
            ell,
            samples: pts.len(),
            invariance_violations: rows.iter().filter(|r| !r.0).count(),
            eta_violations: rows.iter().filter(|r| !(r.1 >= eta)).count(),
            min_eta: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
            orbits: orbit_ok.len(),
            orbit_steps,
            orbit_violations: orbit_ok.iter().filter(|ok| !**ok).count(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantStats {
    pub samples: usize,
    /// Points with `|ψ(f(x)) - ψ(x)| > 2 (tail(x) + tail(f(x)))`.
    pub invariance_violations: usize,
    /// Largest `|ψ(f(x)) - ψ(x)| / (2 (tail(x) + tail(f(x))))`.
    pub max_invariance_ratio: f64,
    pub pairs: usize,
    pub pair_violations: usize,
    pub max_pair_ratio: f64,
    /// Evaluations that returned an error.
    pub failures: usize,
}

impl InvariantStats {
    pub fn passed(&self) -> bool {
        self.invariance_violations == 0 && self.pair_violations == 0 && self.failures == 0
    }
}

/// Invariance of the basis functions `ψ_i` under `f`, and multiplicativity
/// `ψ_{I+J} = ψ_I ψ_J` for random non-negative `I, J` with entries `<= 3`.
#[allow(clippy::too_many_arguments)]
pub fn invariant_suite(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    count: usize,
    pairs: usize,
    tol: f64,
    seed: u64,
) -> Result<InvariantStats> {
    let opts = PsiOptions::default();
    let d = lat.d as usize;
    let per = count.div_ceil(d);
    let mut pts: Vec<(usize, Vec<C64>)> = Vec::new();
    for ell in 0..d {
        let sample = sample_u(
            lat,
            spec,
            ell,
            per,
            seed_for(seed, ell, 0x2B),
            USampling::default(),
        );
        pts.extend(sample.into_iter().map(|x| (ell, x)));
    }
    pts.truncate(count);
    if pts.is_empty() {
        return Err(Error::EmptySample);
    }
    let rows = lat.basis_rows().to_vec();
    let ratios: Vec<Option<f64>> = pts
        .par_iter()
        .map(|(ell, x)| {
            let (fx, _) = dynamics.step(x).ok()?;
            let mut worst: f64 = 0.0;
            for row in &rows {
                let p0 = psi_i(x, row, *ell, dynamics, lat, spec, tol, opts).ok()?;
                let p1 = psi_i(&fx, row, *ell, dynamics, lat, spec, tol, opts).ok()?;
                let allowed = 2.0 * (p0.tail_bound + p1.tail_bound);
                let diff = (p1.value - p0.value).norm();
                worst = worst.max(if diff == 0.0 { 0.0 } else { diff / allowed });
            }
            Some(worst)
        })
        .collect();

    let n = lat.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, 0, 0x3C));
    let jobs: Vec<(usize, Vec<i64>, Vec<i64>)> = (0..pairs)
        .map(|_| {
            let k = rng.random_range(0..pts.len());
            let i: Vec<i64> = (0..n).map(|_| rng.random_range(0..=3)).collect();
            let j: Vec<i64> = (0..n).map(|_| rng.random_range(0..=3)).collect();
            (k, i, j)
        })
        .collect();
    let pair_ratios: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|(k, i, j)| {
            let (ell, x) = &pts[*k];
            let sum: Vec<i64> = i.iter().zip(j).map(|(p, q)| p + q).collect();
            let pi = psi_i(x, i, *ell, dynamics, lat, spec, tol, opts).ok()?;
            let pj = psi_i(x, j, *ell, dynamics, lat, spec, tol, opts).ok()?;
            let ps = psi_i(x, &sum, *ell, dynamics, lat, spec, tol, opts).ok()?;
            let allowed = ps.tail_bound
                + pi.value.norm() * pj.tail_bound
                + pj.value.norm() * pi.tail_bound
                + pi.tail_bound * pj.tail_bound;
            let diff = (ps.value - pi.value * pj.value).norm();
            Some(if diff == 0.0 { 0.0 } else { diff / allowed })
        })
        .collect();

    let ok = |v: &Option<f64>| v.is_some();
    Ok(InvariantStats {
        samples: pts.len(),
        invariance_violations: ratios.iter().flatten().filter(|r| **r > 1.0).count(),
        max_invariance_ratio: ratios.iter().flatten().fold(0.0, |m, r| m.max(*r)),
        pairs: jobs.len(),
        pair_violations: pair_ratios.iter().flatten().filter(|r| **r > 1.0).count(),
        max_pair_ratio: pair_ratios.iter().flatten().fold(0.0, |m, r| m.max(*r)),
        failures: ratios.iter().chain(&pair_ratios).filter(|v| !ok(v)).count(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChartStats {
    pub samples: usize,
    /// Largest `‖Φ^{-1}(Φ(x)) - x‖_∞`.
    pub round_trip_max: f64,
    /// The same, relative to `‖x‖_∞`.
    pub round_trip_relative_max: f64,
    pub round_trip_violations: usize,
    /// Largest relative error of the model chart and its inverse.
    pub model_inverse_max: f64,
    pub model_violations: usize,
    pub failures: usize,
}

impl ChartStats {
    pub fn passed(&self) -> bool {
        self.round_trip_violations == 0
            && self.model_violations == 0
            && self.failures == 0
            && self.samples > 0
    }
}

fn rel(p: C64, q: C64) -> f64 {
    let s = q.norm();
    if s == 0.0 {
        p.norm()
    } else {
        (p - q).norm() / s
    }
}

/// Round trips of `Φ_ℓ` on points `x = Φ_ℓ^{-1}(z, w)` with `(z, w)`
/// sampled in `V`, and of the model chart.
#[allow(clippy::too_many_arguments)]
pub fn chart_suite(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    count: usize,
    tol: f64,
    round_trip_tol: f64,
    model_tol: f64,
    seed: u64,
) -> Result<ChartStats> {
    let a = dynamics.leading();
    let d = lat.d as usize;
    let per = count.div_ceil(d);
    let mut pts = Vec::new();
    for ell in 0..d {
        let s = sample_chart_points(dynamics, lat, spec, ell, per, seed_for(seed, ell, 0x4D))?;
        pts.extend(s.into_iter().map(|p| (ell, p)));
    }
    pts.truncate(count);
    let rows: Vec<Option<(f64, f64, f64)>> = pts
        .par_iter()
        .map(|(ell, p)| {
            let x = phi_inverse(p.z, &p.w, *ell, dynamics, lat, spec, tol).ok()?;
            let (q, _) =
                phi_forward(&x, *ell, dynamics, lat, spec, tol, PsiOptions::default()).ok()?;
            let y = phi_inverse(q.z, &q.w, *ell, dynamics, lat, spec, tol).ok()?;
            let abs = x
                .iter()
                .zip(&y)
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, f64::max);
            let scale = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let xm = model_inverse(p.z, &p.w, *ell, a, lat).ok()?;
            let back = model_phi(&xm, *ell, a, lat).ok()?;
            let again = model_inverse(back.z, &back.w, *ell, a, lat).ok()?;
            let mut model = rel(back.z, p.z);
            for (u, v) in back.w.iter().zip(&p.w) {
                model = model.max(rel(*u, *v));
            }
            for (u, v) in again.iter().zip(&xm) {
                model = model.max(rel(*u, *v));
            }
            Some((abs, abs / scale, model))
        })
        .collect();
    let done: Vec<&(f64, f64, f64)> = rows.iter().flatten().collect();
    Ok(ChartStats {
        samples: pts.len(),
        round_trip_max: done.iter().map(|r| r.0).fold(0.0, f64::max),
        round_trip_relative_max: done.iter().map(|r| r.1).fold(0.0, f64::max),
        round_trip_violations: done.iter().filter(|r| !(r.0 <= round_trip_tol)).count(),
        model_inverse_max: done.iter().map(|r| r.2).fold(0.0, f64::max),
        model_violations: done.iter().filter(|r| !(r.2 <= model_tol)).count(),
        failures: rows.len() - done.len(),
    })
}

/// `|β(z)/z - 1|` at one point of a ray.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayPoint {
    pub modulus: f64,
    pub ratio_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyStats {
    pub samples: usize,
    pub max_residual: f64,
    pub violations: usize,
    pub failures: usize,
    pub max_steps: usize,
    pub ray: Vec<RayPoint>,
}

impl ConjugacyStats {
    pub fn passed(&self, ratio_tol: f64) -> bool {
        self.violations == 0
            && self.failures == 0
            && self.samples > 0
            && self.ray.last().is_some_and(|r| r.ratio_error < ratio_tol)
    }
}

/// `|β(f̃(z, w)) - β(z, w) - 1|` on sampled chart points, one Fatou chart per
/// slice, and `β(z)/z` along the positive ray of the first slice.
#[allow(clippy::too_many_arguments)]
pub fn conjugacy_suite(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    count: usize,
    tol: f64,
    options: FatouOptions,
    ray: &[f64],
    seed: u64,
) -> Result<ConjugacyStats> {
    let model = dynamics_is_model(dynamics);
    let d = lat.d as usize;
    let per = count.div_ceil(d);
    let mut pts = Vec::new();
    for ell in 0..d {
        let s = sample_chart_points(dynamics, lat, spec, ell, per, seed_for(seed, ell, 0x5E))?;
        pts.extend(s.into_iter().map(|p| (ell, p)));
    }
    pts.truncate(count);
    let rows: Vec<Option<(f64, usize)>> = pts
        .par_iter()
        .map(|(ell, p)| {
            let (chart, slice) =
                FatouChart::for_germ(dynamics, lat, spec, *ell, p.w.clone(), model, options)
                    .ok()?;
            let fz = ftilde(p.z, &p.w, *ell, dynamics, lat, spec, 1e-12).ok()?;
            let b0 = fatou_beta(p.z, &chart, &slice).ok()?;
            let b1 = fatou_beta(fz, &chart, &slice).ok()?;
            Some(((b1.value - b0.value - 1.0).norm(), b0.steps.max(b1.steps)))
        })
        .collect();
    let mut ray_out = Vec::new();
    if let Some((ell, p)) = pts.first() {
        let (chart, slice) =
            FatouChart::for_germ(dynamics, lat, spec, *ell, p.w.clone(), model, options)?;
        for &m in ray {
            let z = C64::new(m, 0.0);
            let b = fatou_beta(z, &chart, &slice)?;
            ray_out.push(RayPoint {
                modulus: m,
                ratio_error: (b.value / z - 1.0).norm(),
            });
        }
    }
    let done: Vec<&(f64, usize)> = rows.iter().flatten().collect();
    Ok(ConjugacyStats {
        samples: pts.len(),
        max_residual: done.iter().map(|r| r.0).fold(0.0, f64::max),
        violations: done.iter().filter(|r| !(r.0 <= tol)).count(),
        failures: rows.len() - done.len(),
        max_steps: done.iter().map(|r| r.1).max().unwrap_or(0),
        ray: ray_out,
    })
}
