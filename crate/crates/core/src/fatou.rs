//! The chart `Φ_ℓ(x) = (1/x^M, ψ_2(x), ..., ψ_n(x))`, its inverse on `V`,
//! and Fatou coordinates of the slice maps `f̃_w(z) = 1/f(Φ_ℓ^{-1}(z, w))^M`.
//!
//! The Fatou coordinate is normalized at the base point `p = 2 R_w / cos θ`:
//! `β(z) = lim_j f̃^j(z) - f̃^j(p)`. The limit is accelerated with the
//! asymptotic solution `φ_0` of the Abel equation of the model map, so that
//! `β(z) = B(z) - B(p)` with `B(z) = φ_0(z) + Σ_k ρ(f̃^k(z))` and
//! `ρ(z) = φ_0(f̃(z)) - φ_0(z) - 1`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{
    branch_log_xm, in_u, in_v, log_w_power, sample_u, slice_radius, CalibrationConfig, PetalSpec,
    USampling,
};
use crate::error::{Error, Result};
use crate::germ::Dynamics;
use crate::invariants::{g_i, psi_i, InvariantEval, PsiOptions};
use crate::lattice::LatticeData;
use crate::numeric::{expm1, log1p, CompensatedSum, C64};
use crate::series::AbelSeries;

/// A point `(z, w)` of the chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub z: C64,
    pub w: Vec<C64>,
}

const PICARD_MAX: usize = 200;
/// Residual of the chart probes, relative to `1 + max |w|`.
const PROBE_TOL: f64 = 1e-8;
/// Residual of `f̃` evaluations in the derivative fit, relative to `1 + max |w|`.
const DERIVATIVE_TOL: f64 = 1e-10;
/// Largest relative distance between two inverse-chart solutions that still
/// counts as one solution.
const PROBE_GAP: f64 = 1e-6;

/// `(1/x^M, g_2(x), ..., g_n(x))`: the chart of the model map.
pub fn model_phi(x: &[C64], ell: usize, a: &[C64], lat: &LatticeData) -> Result<ChartPoint> {
    let z = (-branch_log_xm(x, ell, lat)? * lat.d as f64).exp();
    let w = lat
        .basis_rows()
        .iter()
        .map(|row| g_i(x, row, ell, a, lat))
        .collect::<Result<_>>()?;
    Ok(ChartPoint { z, w })
}

/// `Φ_ℓ(x)` with the invariants evaluated to absolute accuracy `tol`.
pub fn phi_forward(
    x: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<(ChartPoint, Vec<InvariantEval>)> {
    if in_u(x, spec, lat) != Some(ell) {
        return Err(Error::OutsidePetal { ell });
    }
    let z = (-branch_log_xm(x, ell, lat)? * lat.d as f64).exp();
    let evals: Vec<InvariantEval> = lat
        .basis_rows()
        .iter()
        .map(|row| psi_i(x, row, ell, dynamics, lat, spec, tol, opts))
        .collect::<Result<_>>()?;
    let w = evals.iter().map(|e| e.value).collect();
    Ok((ChartPoint { z, w }, evals))
}

/// Inverse of [`model_phi`]: `x_i = exp(-d a_i L) ∏_j w_j^{𝓝_ij}` with
/// `L = (-log z + 2πiℓ)/d`.
pub fn model_inverse(
    z: C64,
    w: &[C64],
    ell: usize,
    a: &[C64],
    lat: &LatticeData,
) -> Result<Vec<C64>> {
    if z == C64::new(0.0, 0.0) {
        return Err(Error::ZeroCoordinate { index: 0 });
    }
    let d = lat.d as f64;
    let big_l = (-z.ln() + C64::new(0.0, TAU * ell as f64)) / d;
    a.iter()
        .enumerate()
        .map(|(i, ai)| {
            Ok(match log_w_power(w, lat.w_exponents(i))? {
                Some(lw) => (-ai * d * big_l + lw).exp(),
                None => C64::new(0.0, 0.0),
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn u_values(
    x: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<Vec<C64>> {
    lat.basis_rows()
        .iter()
        .map(|row| Ok(psi_i(x, row, ell, dynamics, lat, spec, tol, opts)?.u_value))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn picard(
    z: C64,
    w: &[C64],
    seed: Vec<C64>,
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<Vec<C64>> {
    let a = dynamics.leading();
    let mut x = seed;
    let mut residual = f64::INFINITY;
    // Early iterations only need u to a fraction of the current residual.
    let final_tol = 0.1 * tol;
    let mut u_tol = (1e-3 * (1.0 + w.iter().map(|v| v.norm()).fold(0.0, f64::max))).max(final_tol);
    for _ in 0..PICARD_MAX {
        let u = u_values(&x, ell, dynamics, lat, spec, u_tol, opts)?;
        residual = 0.0;
        for (k, row) in lat.basis_rows().iter().enumerate() {
            let psi = g_i(&x, row, ell, a, lat)? * u[k];
            residual = residual.max((psi - w[k]).norm());
        }
        let converged = residual <= tol;
        if converged && u_tol <= final_tol {
            return Ok(x);
        }
        u_tol = u_tol.min(1e-3 * residual).max(final_tol);
        if converged {
            continue;
        }
        let scaled: Vec<C64> = w.iter().zip(&u).map(|(wk, uk)| wk / uk).collect();
        x = model_inverse(z, &scaled, ell, a, lat)?;
    }
    Err(Error::NoConvergence {
        what: "phi_inverse",
        iterations: PICARD_MAX,
        residual,
    })
}

/// `Φ_ℓ^{-1}(z, w)` for `(z, w) ∈ V`, by the fixed point
/// `x = model_inverse(z, w / u(x))`. The residual `max_i |ψ_i(x) - w_i|` is
/// at most `tol`; the `z` component is reproduced to rounding.
#[allow(clippy::too_many_arguments)]
pub fn phi_inverse(
    z: C64,
    w: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
) -> Result<Vec<C64>> {
    phi_inverse_with(z, w, ell, dynamics, lat, spec, tol, PsiOptions::default())
}

/// [`phi_inverse`] with explicit options for the invariant functions.
#[allow(clippy::too_many_arguments)]
pub fn phi_inverse_with(
    z: C64,
    w: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<Vec<C64>> {
    let a = dynamics.leading();
    if !in_v(z, w, a, spec, lat)? {
        return Err(Error::OutsideV);
    }
    let seed = model_inverse(z, w, ell, a, lat)?;
    picard(z, w, seed, ell, dynamics, lat, spec, tol, opts)
}

/// Runs the fixed point from a perturbed seed and returns the distance
/// between the two solutions (a numerical injectivity probe).
#[allow(clippy::too_many_arguments)]
pub fn phi_inverse_uniqueness_gap(
    z: C64,
    w: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
) -> Result<f64> {
    let x = phi_inverse(z, w, ell, dynamics, lat, spec, tol)?;
    uniqueness_gap(
        &x,
        z,
        w,
        ell,
        dynamics,
        lat,
        spec,
        tol,
        PsiOptions::default(),
    )
}

/// Distance from `x = Φ_ℓ^{-1}(z, w)` to the solution reached from a
/// perturbed seed.
#[allow(clippy::too_many_arguments)]
fn uniqueness_gap(
    x: &[C64],
    z: C64,
    w: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<f64> {
    if lat.basis_rows().is_empty() {
        // z alone fixes x on the branch
        return Ok(0.0);
    }
    let n = x.len();
    let seed: Vec<C64> = x
        .iter()
        .enumerate()
        .map(|(i, xi)| xi * (1.0 + C64::from_polar(0.05, TAU * (i as f64 + 0.5) / n as f64)))
        .collect();
    if in_u(&seed, spec, lat) != Some(ell) {
        return Ok(0.0);
    }
    let y = picard(z, w, seed, ell, dynamics, lat, spec, tol, opts)?;
    Ok(x.iter()
        .zip(&y)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max))
}

fn increment(z: C64, multi_index: &[u32], t: &[C64]) -> C64 {
    let s: C64 = t
        .iter()
        .zip(multi_index)
        .map(|(ti, &mi)| log1p(*ti) * f64::from(mi))
        .sum();
    z * expm1(-s)
}

/// `f̃_w(z) = 1/f(x)^M` with `x = Φ_ℓ^{-1}(z, w)`.
#[allow(clippy::too_many_arguments)]
pub fn ftilde(
    z: C64,
    w: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
) -> Result<C64> {
    ftilde_with(z, w, ell, dynamics, lat, spec, tol, PsiOptions::default())
}

/// [`ftilde`] with explicit options for the invariant functions.
#[allow(clippy::too_many_arguments)]
pub fn ftilde_with(
    z: C64,
    w: &[C64],
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    tol: f64,
    opts: PsiOptions,
) -> Result<C64> {
    let x = phi_inverse_with(z, w, ell, dynamics, lat, spec, tol, opts)?;
    let (_, t) = dynamics.step(&x)?;
    Ok(z + increment(z, dynamics.multi_index(), &t))
}

/// A map of a half-plane-like region `z ↦ z + 1 + o(1)` that can be iterated.
pub trait SliceMap: Sync {
    type State: Clone + Send;
    fn seed(&self, z: C64) -> Result<Self::State>;
    /// Advances the state from `z` and returns `f̃(z) - z`.
    fn advance(&self, state: &mut Self::State, z: C64) -> Result<C64>;
}

/// The slice map `f̃_w` of a germ, iterated through the germ itself.
pub struct GermSlice<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub lat: &'a LatticeData,
    pub spec: &'a PetalSpec,
    pub ell: usize,
    pub w: Vec<C64>,
    pub tol: f64,
}

impl SliceMap for GermSlice<'_> {
    type State = Vec<C64>;

    fn seed(&self, z: C64) -> Result<Vec<C64>> {
        phi_inverse(
            z,
            &self.w,
            self.ell,
            self.dynamics,
            self.lat,
            self.spec,
            self.tol,
        )
    }

    fn advance(&self, state: &mut Vec<C64>, z: C64) -> Result<C64> {
        let (next, t) = self.dynamics.step(state)?;
        *state = next;
        Ok(increment(z, self.dynamics.multi_index(), &t))
    }
}

/// A slice map given in closed form.
pub struct SliceFn<F>(pub F);

impl<F: Fn(C64) -> C64 + Sync> SliceMap for SliceFn<F> {
    type State = ();

    fn seed(&self, _z: C64) -> Result<()> {
        Ok(())
    }

    fn advance(&self, _state: &mut (), z: C64) -> Result<C64> {
        Ok((self.0)(z) - z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FatouOptions {
    pub tol: f64,
    pub j_max: usize,
    pub series_order: usize,
    /// Use the asymptotic Abel series; otherwise iterate `z` and `p` in
    /// lockstep with `φ_0 = id`.
    pub accelerate: bool,
}

impl Default for FatouOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            j_max: 1_000_000,
            series_order: 8,
            accelerate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaEval {
    pub value: C64,
    pub error: f64,
    pub steps: usize,
}

/// Fatou coordinate data for one slice `V_w = {|z| > R_w, |arg z| < θ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FatouChart {
    pub ell: usize,
    pub w: Vec<C64>,
    pub r_w: f64,
    pub theta: f64,
    pub base_point: C64,
    pub series: AbelSeries,
    /// Decay exponent `q` in `|ρ(z)| = O(|z|^{-1-q})`, used for the tail.
    pub tail_exponent: f64,
    pub options: FatouOptions,
    /// Error bound of `B(p)`.
    pub base_error: f64,
    base_value: C64,
}

/// `p = 2 R_w / cos θ`.
pub fn chart_base_point(r_w: f64, theta: f64) -> C64 {
    C64::new(2.0 * r_w / theta.cos(), 0.0)
}

fn abel_value<S: SliceMap>(
    slice: &S,
    z: C64,
    series: &AbelSeries,
    tail_exponent: f64,
    opts: &FatouOptions,
) -> Result<BetaEval> {
    let mut state = slice.seed(z)?;
    let mut zc = z;
    let mut sum = CompensatedSum::new();
    let phi0 = series.eval(z);
    sum.add(phi0);
    let mut prev = f64::INFINITY;
    let scale = 1.0 + series.b.norm();
    for j in 0..opts.j_max {
        let dz = slice.advance(&mut state, zc)?;
        let r = series.residual(zc, dz);
        sum.add(r);
        zc += dz;
        let rn = r.norm();
        let tail = 2.0 * rn * zc.norm() / tail_exponent;
        if j >= 1 && rn <= prev && tail <= 0.5 * opts.tol {
            let rounding = 4.0 * f64::EPSILON * (phi0.norm() + (j + 1) as f64 * scale);
            return Ok(BetaEval {
                value: sum.value(),
                error: tail + rounding,
                steps: j + 1,
            });
        }
        prev = rn;
    }
    Err(Error::NoConvergence {
        what: "fatou_beta",
        iterations: opts.j_max,
        residual: prev,
    })
}

fn lockstep_beta<S: SliceMap>(
    slice: &S,
    z: C64,
    p: C64,
    tail_exponent: f64,
    opts: &FatouOptions,
) -> Result<BetaEval> {
    let mut sz = slice.seed(z)?;
    let mut sp = slice.seed(p)?;
    let (mut zc, mut pc) = (z, p);
    let mut diff = CompensatedSum::new();
    diff.add(z - p);
    let mut prev = f64::INFINITY;
    for j in 0..opts.j_max {
        let dz = slice.advance(&mut sz, zc)?;
        let dp = slice.advance(&mut sp, pc)?;
        let inc = dz - dp;
        diff.add(inc);
        zc += dz;
        pc += dp;
        let rn = inc.norm();
        let tail = 2.0 * rn * zc.norm().min(pc.norm()) / tail_exponent;
        if j >= 1 && rn <= prev && tail <= opts.tol {
            let rounding = 4.0 * f64::EPSILON * (z.norm() + p.norm() + 2.0 * (j + 1) as f64);
            return Ok(BetaEval {
                value: diff.value(),
                error: tail + rounding,
                steps: j + 1,
            });
        }
        prev = rn;
    }
    Err(Error::NoConvergence {
        what: "fatou_beta",
        iterations: opts.j_max,
        residual: prev,
    })
}

impl FatouChart {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: SliceMap>(
        slice: &S,
        ell: usize,
        w: Vec<C64>,
        r_w: f64,
        theta: f64,
        series: AbelSeries,
        tail_exponent: f64,
        options: FatouOptions,
    ) -> Result<Self> {
        if !(r_w.is_finite() && r_w > 0.0 && r_w < 1e15) {
            return Err(Error::EmptySlice { r_w });
        }
        let base_point = chart_base_point(r_w, theta);
        let (base_value, base_error) = if options.accelerate {
            let b = abel_value(slice, base_point, &series, tail_exponent, &options)?;
            (b.value, b.error)
        } else {
            (C64::new(0.0, 0.0), 0.0)
        };
        Ok(Self {
            ell,
            w,
            r_w,
            theta,
            base_point,
            series,
            tail_exponent,
            options,
            base_error,
            base_value,
        })
    }

    /// Chart for the slice of a germ through `w`.
    pub fn for_germ<'a>(
        dynamics: &'a dyn Dynamics,
        lat: &'a LatticeData,
        spec: &'a PetalSpec,
        ell: usize,
        w: Vec<C64>,
        model: bool,
        options: FatouOptions,
    ) -> Result<(Self, GermSlice<'a>)> {
        let a = dynamics.leading();
        let r_w = slice_radius(&w, a, spec, lat)?;
        let series = if options.accelerate {
            AbelSeries::for_model(a, dynamics.multi_index(), options.series_order)
        } else {
            AbelSeries::raw()
        };
        let s = spec.s(lat);
        let tail_exponent = if model && options.accelerate {
            (options.series_order + 1) as f64
        } else {
            s.min(1.0)
        };
        let slice = GermSlice {
            dynamics,
            lat,
            spec,
            ell,
            w: w.clone(),
            tol: 1e-12,
        };
        let chart = Self::new(
            &slice,
            ell,
            w,
            r_w,
            spec.sector.theta,
            series,
            tail_exponent,
            options,
        )?;
        Ok((chart, slice))
    }

    pub fn contains(&self, z: C64) -> bool {
        z.norm() > self.r_w && z.arg().abs() < self.theta
    }

    /// Upper bound on the error of any converged `β` evaluation.
    pub fn beta_error(&self) -> f64 {
        self.base_error + self.options.tol
    }
}

/// `β(z)` on the slice of `chart`.
pub fn fatou_beta<S: SliceMap>(z: C64, chart: &FatouChart, slice: &S) -> Result<BetaEval> {
    if !chart.contains(z) {
        return Err(Error::OutsideV);
    }
    if chart.options.accelerate {
        let b = abel_value(slice, z, &chart.series, chart.tail_exponent, &chart.options)?;
        Ok(BetaEval {
            value: b.value - chart.base_value,
            error: b.error + chart.base_error,
            steps: b.steps,
        })
    } else {
        lockstep_beta(
            slice,
            z,
            chart.base_point,
            chart.tail_exponent,
            &chart.options,
        )
    }
}

/// Witness that `ζ` lies in the translate `β(V_w) - j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslateWitness {
    pub target: C64,
    pub j: u64,
    pub z: C64,
    pub residual: f64,
}

const ROUCHE_SAMPLES: usize = 64;

/// Whether the disc `D(c, ρ|c|)` lies in `V_w` and `|β(z) - z| < ρ|c|` on
/// its boundary, so that `β - c` has exactly one zero inside.
fn rouche_disc<S: SliceMap>(chart: &FatouChart, slice: &S, c: C64, rho: f64) -> Result<bool> {
    let radius = rho * c.norm();
    if c.norm() - radius <= chart.r_w || c.arg().abs() + rho.asin() >= chart.theta {
        return Ok(false);
    }
    for k in 0..ROUCHE_SAMPLES {
        let z = c + C64::from_polar(radius, TAU * k as f64 / ROUCHE_SAMPLES as f64);
        let b = fatou_beta(z, chart, slice)?;
        if (b.value - z).norm() + b.error >= radius {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Finds the smallest `j` (along a doubling search refined by bisection)
/// such that `ζ + j = β(z)` for some `z ∈ V_w`, certified by a Rouché disc,
/// and solves for `z` with `|β(z) - (ζ + j)| <= tol`.
pub fn check_union_translates<S: SliceMap>(
    chart: &FatouChart,
    slice: &S,
    target: C64,
    tol: f64,
    max_j: u64,
) -> Result<TranslateWitness> {
    let rho = 0.5 * chart.theta.sin();
    let ok = |j: u64| rouche_disc(chart, slice, target + j as f64, rho);
    let mut hi = 0u64;
    let mut lo: Option<u64> = None;
    while !ok(hi)? {
        lo = Some(hi);
        hi = if hi == 0 { 1 } else { hi * 2 };
        if hi > max_j {
            return Err(Error::NotReached { target, max_j });
        }
    }
    if let Some(mut l) = lo {
        while hi - l > 1 {
            let mid = l + (hi - l) / 2;
            if ok(mid)? {
                hi = mid;
            } else {
                l = mid;
            }
        }
    }
    let c = target + hi as f64;
    let radius = rho * c.norm();
    let mut z = c + (c - fatou_beta(c, chart, slice)?.value);
    if (z - c).norm() >= radius {
        z = c;
    }
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        let b = fatou_beta(z, chart, slice)?;
        let res = b.value - c;
        residual = res.norm();
        if residual <= tol {
            return Ok(TranslateWitness {
                target,
                j: hi,
                z,
                residual,
            });
        }
        z -= res;
        if (z - c).norm() >= radius {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "check_union_translates",
        iterations: 100,
        residual,
    })
}

/// Quasi-random points of `V ∩ Φ^{model}(U_ℓ)`, the model images of a `U_ℓ`
/// sample drawn with a margin that matches the `r` constraint of `V`.
pub fn sample_chart_points(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    ell: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ChartPoint>> {
    let a = dynamics.leading();
    let im_max = a.iter().map(|ai| ai.im.abs()).fold(0.0, f64::max);
    let margin = -spec.r.ln() + im_max * (spec.sector.theta + TAU * ell as f64);
    let shape = USampling {
        depth_decades: 4.0,
        margin: margin.max(0.0) + 1e-6,
    };
    let mut out = Vec::with_capacity(count);
    for x in sample_u(lat, spec, ell, count, seed, shape) {
        let p = model_phi(&x, ell, a, lat)?;
        if in_v(p.z, &p.w, a, spec, lat)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// `None` when the invariant functions do not converge within their budget,
/// which says nothing about the chart itself.
fn chart_probe(
    p: &ChartPoint,
    ell: usize,
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    opts: PsiOptions,
) -> Result<Option<bool>> {
    let tol = PROBE_TOL * (1.0 + p.w.iter().map(|v| v.norm()).fold(0.0, f64::max));
    let x = match phi_inverse_with(p.z, &p.w, ell, dynamics, lat, spec, tol, opts) {
        Ok(x) => x,
        Err(Error::NoConvergence { what: "psi_i", .. }) => return Ok(None),
        Err(
            Error::OutsidePetal { .. }
            | Error::NoConvergence { .. }
            | Error::OutsidePetalBranch { .. },
        ) => return Ok(Some(false)),
        Err(e) => return Err(e),
    };
    let u = match u_values(&x, ell, dynamics, lat, spec, tol, opts) {
        Ok(u) => u,
        Err(Error::NoConvergence { what: "psi_i", .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if u.iter().any(|uk| (uk - 1.0).norm() >= 0.5) {
        return Ok(Some(false));
    }
    let scale = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    match uniqueness_gap(&x, p.z, &p.w, ell, dynamics, lat, spec, tol, opts) {
        Ok(gap) if gap <= PROBE_GAP * scale.max(1e-300) => {}
        Err(Error::NoConvergence { what: "psi_i", .. }) => return Ok(None),
        Ok(_) | Err(Error::NoConvergence { .. } | Error::OutsidePetal { .. }) => {
            return Ok(Some(false))
        }
        Err(e) => return Err(e),
    }
    let (_, t) = dynamics.step(&x)?;
    let fz = p.z + increment(p.z, dynamics.multi_index(), &t);
    if fz.norm() <= p.z.norm() + 0.5 {
        return Ok(Some(false));
    }
    in_v(fz, &p.w, dynamics.leading(), spec, lat).map(Some)
}

/// Halves `r` from its current value until, on a chart sample of every
/// component, `Φ^{-1}` converges into `U_ℓ` with `|u - 1| < 1/2`, passes the
/// injectivity probe, and `f̃` moves points by at least `1/2` inside `V`.
/// Probes whose invariant functions exhaust their budget are inconclusive;
/// each component needs at least one conclusive probe.
pub fn calibrate_chart_radius(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &mut PetalSpec,
    cfg: &CalibrationConfig,
) -> Result<()> {
    let a = dynamics.leading();
    let n_abs: f64 = lat.n_mat.iter().flatten().map(|&v| (v as f64).abs()).sum();
    let n_inf = lat
        .n_mat
        .iter()
        .map(|row| row.iter().map(|&v| (v as f64).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let a_inf = a.iter().map(|ai| ai.norm()).fold(0.0, f64::max);
    let r_min = 0.5 * 2f64.powf(-n_inf - n_abs) * (-a_inf * spec.sector.theta).exp();
    loop {
        let mut witness = None;
        for ell in 0..lat.d as usize {
            let pts = sample_chart_points(
                dynamics,
                lat,
                spec,
                ell,
                cfg.chart_samples,
                cfg.seed ^ 0x5EED,
            )?;
            let spec_ref: &PetalSpec = spec;
            let results: Vec<Result<Option<bool>>> = pts
                .par_iter()
                .map(|p| chart_probe(p, ell, dynamics, lat, spec_ref, cfg.psi))
                .collect();
            let mut conclusive = 0usize;
            for (p, r) in pts.iter().zip(results) {
                match r? {
                    Some(true) => conclusive += 1,
                    Some(false) => {
                        witness = Some(model_inverse(p.z, &p.w, ell, a, lat)?);
                        break;
                    }
                    None => {}
                }
            }
            if witness.is_some() {
                break;
            }
            if conclusive == 0 {
                return Err(Error::CalibrationFailed {
                    reason: format!(
                        "no conclusive chart probe on component {ell} at r = {:e}",
                        spec.r
                    ),
                    witness: None,
                });
            }
        }
        match witness {
            None => return Ok(()),
            Some(x) => {
                if spec.r * 0.5 < r_min {
                    return Err(Error::CalibrationFailed {
                        reason: format!("chart probes fail down to r = {:e}", spec.r),
                        witness: Some(x),
                    });
                }
                spec.r *= 0.5;
            }
        }
    }
}

/// Fits `K'` in `|∂h̃/∂z| <= K' |z|^{-1-γ/d}`, `h̃ = f̃ - z - 1`, by central
/// differences with steps `h` and `h/2` (kept only when they agree within a
/// factor of two). The returned constant carries a safety factor of two;
/// `None` when no sample point gives a usable difference.
pub fn htilde_derivative_check(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    ell: usize,
    sample: &[ChartPoint],
) -> Result<Option<f64>> {
    htilde_derivative_check_with(dynamics, lat, spec, ell, sample, PsiOptions::default())
}

/// [`htilde_derivative_check`] with explicit options for the invariant
/// functions.
pub fn htilde_derivative_check_with(
    dynamics: &dyn Dynamics,
    lat: &LatticeData,
    spec: &PetalSpec,
    ell: usize,
    sample: &[ChartPoint],
    opts: PsiOptions,
) -> Result<Option<f64>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let s = spec.s(lat);
    let rho = 0.5 * spec.sector.theta.sin();
    let a = dynamics.leading();
    let fits: Vec<Result<Option<f64>>> = sample
        .par_iter()
        .map(|p| {
            let tol = DERIVATIVE_TOL * (1.0 + p.w.iter().map(|v| v.norm()).fold(0.0, f64::max));
            let htilde = |z: C64| -> Result<Option<C64>> {
                if !in_v(z, &p.w, a, spec, lat)? {
                    return Ok(None);
                }
                match ftilde_with(z, &p.w, ell, dynamics, lat, spec, tol, opts) {
                    Ok(fz) => Ok(Some(fz - z - 1.0)),
                    Err(Error::OutsidePetal { .. } | Error::NoConvergence { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            };
            let h = 0.05 * rho * p.z.norm();
            let diff = |h: f64| -> Result<Option<C64>> {
                let (Some(up), Some(dn)) = (htilde(p.z + h)?, htilde(p.z - h)?) else {
                    return Ok(None);
                };
                Ok(Some((up - dn) / (2.0 * h)))
            };
            let (Some(d1), Some(d2)) = (diff(h)?, diff(0.5 * h)?) else {
                return Ok(None);
            };
            let (m1, m2) = (d1.norm(), d2.norm());
            if m1.max(m2) > 2.0 * m1.min(m2) + 1e-14 {
                return Ok(None);
            }
            Ok(Some(m2 * p.z.norm().powf(1.0 + s)))
        })
        .collect();
    let mut k: Option<f64> = None;
    for f in fits {
        if let Some(v) = f? {
            k = Some(k.map_or(v, |k| k.max(v)));
        }
    }
    Ok(k.map(|k| 2.0 * k))
}
