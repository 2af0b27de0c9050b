use std::f64::consts::{PI, TAU};

use super::{in_u, PetalSpec};
use crate::lattice::LatticeData;
use crate::numeric::C64;
use crate::sampling::Halton;

/// Shape of a `U_ℓ` sample: `|x^M|` is log-uniform over `depth_decades`
/// decades below `ε`, and every coordinate satisfies
/// `|x_i| < e^{-margin} |x^m|^γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct USampling {
    pub depth_decades: f64,
    pub margin: f64,
}

impl Default for USampling {
    fn default() -> Self {
        Self {
            depth_decades: 4.0,
            margin: 0.0,
        }
    }
}

const MAX_DRAWS_FACTOR: u64 = 64;

fn leading_coordinate(lat: &LatticeData) -> usize {
    lat.m
        .iter()
        .position(|&v| v > 0)
        .expect("m has a positive entry")
}

/// Quasi-random points of `U_ℓ`, in multiplicative coordinates.
pub fn sample_u(
    lat: &LatticeData,
    spec: &PetalSpec,
    ell: usize,
    count: usize,
    seed: u64,
    shape: USampling,
) -> Vec<Vec<C64>> {
    let n = lat.n();
    let d = lat.d as f64;
    let lead: Vec<usize> = (0..n).filter(|&i| lat.m[i] > 0).collect();
    let i0 = leading_coordinate(lat);
    let m_abs: f64 = lat.m.iter().map(|&v| f64::from(v)).sum();
    let gamma = spec.gamma;
    let theta = spec.sector.theta;
    let halton = Halton::new(1 + 2 * n, seed);
    let ln_eps = spec.sector.epsilon.ln() + (1.0 - 1e-9f64).ln();
    let mut out = Vec::with_capacity(count);
    let mut idx = 0u64;
    while out.len() < count && idx < MAX_DRAWS_FACTOR * count as u64 + 64 {
        let u = halton.point(idx);
        idx += 1;
        let ln_big = ln_eps - u[0] * shape.depth_decades * std::f64::consts::LN_10;
        let l = ln_big / d;
        let budget = l * (gamma * m_abs - 1.0) - shape.margin * m_abs;
        if budget <= 0.0 {
            continue;
        }
        let weights: Vec<f64> = lead
            .iter()
            .map(|&i| -(1.0 - u[1 + i]).ln() + 1e-12)
            .collect();
        let total: f64 = weights.iter().sum();
        let mut modulus = vec![0.0; n];
        for (k, &i) in lead.iter().enumerate() {
            let e = weights[k] / total * budget / f64::from(lat.m[i]);
            modulus[i] = gamma * l - shape.margin - e;
        }
        for i in (0..n).filter(|&i| lat.m[i] == 0) {
            let e = (2.0 * u[1 + i] + 1e-9) * (gamma * l).abs().max(1.0);
            modulus[i] = gamma * l - shape.margin - e;
        }
        let mut args: Vec<f64> = (0..n).map(|i| TAU * u[1 + n + i] - PI).collect();
        let target =
            TAU * ell as f64 / d + (theta / d) * (2.0 * u[1 + n + i0] - 1.0) * (1.0 - 1e-9);
        let rest: f64 = (0..n)
            .filter(|&i| i != i0)
            .map(|i| f64::from(lat.m[i]) * args[i])
            .sum();
        args[i0] = (target - rest) / f64::from(lat.m[i0]);
        let x: Vec<C64> = (0..n)
            .map(|i| C64::from_polar(modulus[i].exp(), args[i]))
            .collect();
        if in_u(&x, spec, lat) == Some(ell) {
            out.push(x);
        }
    }
    out
}

/// Quasi-random points of `D(ε, θ, δ)` (all components): `|x^M|` and the
/// free moduli are log-uniform, the modulus of the first leading coordinate
/// is solved for and the point is rejected when it exceeds `radius`.
pub fn sample_d(
    lat: &LatticeData,
    spec: &PetalSpec,
    radius: f64,
    count: usize,
    seed: u64,
    depth_decades: f64,
) -> Vec<Vec<C64>> {
    sample_shadow_region(
        lat,
        spec,
        radius,
        count,
        seed,
        depth_decades,
        |u, theta, eps| {
            let ln_big =
                eps.ln() + (1.0 - 1e-9f64).ln() - u[0] * depth_decades * std::f64::consts::LN_10;
            let arg = theta * (2.0 * u[1] - 1.0) * (1.0 - 1e-9);
            C64::new(ln_big, arg)
        },
    )
}

/// Points of `D̃(ε, θ, δ')` whose `x^M` lies in the added discs of `C̃` but
/// outside `C`.
pub fn sample_d_tilde_band(
    lat: &LatticeData,
    spec: &PetalSpec,
    count: usize,
    seed: u64,
    depth_decades: f64,
) -> Vec<Vec<C64>> {
    let radius = spec.delta_prime;
    sample_shadow_region(
        lat,
        spec,
        radius,
        count,
        seed,
        depth_decades,
        |u, theta, eps| {
            // a point of the upper or lower disc, radius uniform in its area
            let half = 0.5 * eps * 10f64.powf(-u[0] * depth_decades);
            let rho = half * u[1].sqrt();
            let phi = TAU * u[2];
            let sign = if u[3] < 0.5 { 1.0 } else { -1.0 };
            let centre = C64::from_polar(half, sign * theta);
            let z = centre + C64::from_polar(rho, phi);
            if z.arg().abs() < theta {
                return C64::new(f64::NAN, 0.0);
            }
            z.ln()
        },
    )
}

fn sample_shadow_region(
    lat: &LatticeData,
    spec: &PetalSpec,
    radius: f64,
    count: usize,
    seed: u64,
    depth_decades: f64,
    shadow: impl Fn(&[f64], f64, f64) -> C64,
) -> Vec<Vec<C64>> {
    let n = lat.n();
    let d = lat.d;
    let big: Vec<f64> = lat.m.iter().map(|&v| f64::from(v) * d as f64).collect();
    let i0 = leading_coordinate(lat);
    let halton = Halton::new(6 + 2 * n, seed);
    let ln_r = radius.ln();
    let mut out = Vec::with_capacity(count);
    let mut idx = 0u64;
    while out.len() < count && idx < MAX_DRAWS_FACTOR * count as u64 + 64 {
        let u = halton.point(idx);
        idx += 1;
        let log_big = shadow(&u[..4], spec.sector.theta, spec.sector.epsilon);
        if !log_big.is_finite() {
            continue;
        }
        let mut modulus = vec![0.0; n];
        let mut args = vec![0.0; n];
        for i in (0..n).filter(|&i| i != i0) {
            modulus[i] = ln_r - u[6 + i] * depth_decades * std::f64::consts::LN_10;
            args[i] = TAU * u[6 + n + i] - PI;
        }
        let rest_mod: f64 = (0..n)
            .filter(|&i| i != i0)
            .map(|i| big[i] * modulus[i])
            .sum();
        let rest_arg: f64 = (0..n).filter(|&i| i != i0).map(|i| big[i] * args[i]).sum();
        modulus[i0] = (log_big.re - rest_mod) / big[i0];
        if modulus[i0] >= ln_r {
            continue;
        }
        let branch = (u[4] * big[i0]).floor();
        args[i0] = (log_big.im + TAU * branch - rest_arg) / big[i0];
        out.push(
            (0..n)
                .map(|i| C64::from_polar(modulus[i].exp(), args[i]))
                .collect(),
        );
    }
    out
}
