//! Sector and petal geometry.
//!
//! Sectors `C(ε, θ)` and their enlargements `C̃` live in the shadow variable;
//! the petal sets `D`, `D̃_ℓ`, `U_ℓ` live in `C^n` and the chart domain `V`
//! lives in `(z, w)` coordinates. Component `ℓ` is the one where
//! `arg(x^m)` sits near `2πℓ/d`.

mod calibrate;
mod sample;

pub use calibrate::{
    calibrate_petal, calibrate_petal_for, dynamics_is_model, effective_theta, eta_rate,
    CalibrationConfig, PetalOverrides,
};
pub use sample::{sample_d, sample_d_tilde_band, sample_u, USampling};

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeData;
use crate::numeric::{wrap_angle, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    pub epsilon: f64,
    pub theta: f64,
}

impl SectorSpec {
    pub fn new(epsilon: f64, theta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) || !(theta > 0.0 && theta < PI / 2.0) {
            return Err(Error::Config(format!(
                "invalid sector (epsilon={epsilon}, theta={theta})"
            )));
        }
        Ok(Self { epsilon, theta })
    }
}

/// Empirical stand-ins for the existential constants of the theory.
/// `None` means the constant has not been fitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    /// Decay rate of `|x_i| / |x^m|^γ` per step, in units of `|x^M|`.
    pub eta: Option<f64>,
    /// Decay rate of `|x_i|` per step on `D`.
    pub rho: Option<f64>,
    /// `|h̃(z, w)| <= K |z|^{-γ/d}`.
    pub k: Option<f64>,
    /// `|∂h̃/∂z| <= K' |z|^{-1-γ/d}`.
    pub k_prime: Option<f64>,
    /// `|x_j^M| <= c |x^M| / (1 + j |x^M|)` along orbits in `U`.
    pub c: Option<f64>,
    /// Orbits from `D̃` enter `D` after at most `C / |x^M|` steps.
    pub c_big: Option<f64>,
    /// `|u_I - 1| <= κ |x^m|^γ`.
    pub kappa: Option<f64>,
    /// Per-unit-index bound on the log of one product factor of `u_I`.
    pub l_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PetalSpec {
    pub sector: SectorSpec,
    pub gamma: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub r: f64,
    /// Exponent `σ` in the per-factor bound `|log factor| <= L |x^M|^{1+σ}`.
    pub factor_exponent: f64,
    pub constants: FittedConstants,
}

impl PetalSpec {
    pub fn validate(&self, a: &[C64], lat: &LatticeData) -> Result<()> {
        let d = lat.d as f64;
        if let Some(i) = a.iter().position(|ai| ai.re + self.gamma / d >= 0.0) {
            return Err(Error::PreconditionViolated(format!(
                "Re(a_{i}) + gamma/d = {} is not negative",
                a[i].re + self.gamma / d
            )));
        }
        if !(self.gamma > 0.0 && self.delta > 0.0 && self.r > 0.0) || self.delta_prime > self.delta
        {
            return Err(Error::PreconditionViolated(
                "petal parameters out of range".into(),
            ));
        }
        Ok(())
    }

    /// `γ / d`, the tail exponent of the chart estimates.
    pub fn s(&self, lat: &LatticeData) -> f64 {
        self.gamma / lat.d as f64
    }
}

pub fn in_c(z: C64, s: &SectorSpec) -> bool {
    z != C64::new(0.0, 0.0) && z.norm() < s.epsilon && z.arg().abs() < s.theta
}

pub fn in_c_tilde(z: C64, s: &SectorSpec) -> bool {
    if in_c(z, s) {
        return true;
    }
    let half = 0.5 * s.epsilon;
    let up = C64::from_polar(half, s.theta);
    (z - up).norm() < half || (z - up.conj()).norm() < half
}

fn sector_component(z: C64, a: C64, p: u32) -> usize {
    let pf = f64::from(p);
    let k = ((pf * z.arg() + (-a).arg()) / TAU).round() as i64;
    k.rem_euclid(i64::from(p)) as usize
}

/// Membership of `z` in `S_a(ε, θ) = {-a z^p ∈ C}`, with the index of the
/// component (the root direction nearest to `z`).
pub fn in_s(z: C64, a: C64, p: u32, s: &SectorSpec) -> Option<usize> {
    in_c(-a * z.powu(p), s).then(|| sector_component(z, a, p))
}

pub fn in_s_tilde(z: C64, a: C64, p: u32, s: &SectorSpec) -> Option<usize> {
    in_c_tilde(-a * z.powu(p), s).then(|| sector_component(z, a, p))
}

/// `log|x^m| + i·arg(x^m)` with the argument wrapped into `(-π, π]`, or
/// `None` if some coordinate with `m_i > 0` vanishes.
pub fn log_xm_principal(x: &[C64], lat: &LatticeData) -> Option<C64> {
    let mut re = 0.0;
    let mut im = 0.0;
    for (xi, &mi) in x.iter().zip(&lat.m) {
        if mi == 0 {
            continue;
        }
        if *xi == C64::new(0.0, 0.0) {
            return None;
        }
        let mf = f64::from(mi);
        re += mf * xi.norm().ln();
        im += mf * xi.arg();
    }
    Some(C64::new(re, wrap_angle(im)))
}

/// `log(x^m)` on the branch whose argument lies in
/// `(2πℓ/d - π/d, 2πℓ/d + π/d]`.
pub fn branch_log_xm(x: &[C64], ell: usize, lat: &LatticeData) -> Result<C64> {
    let d = lat.d as f64;
    if ell as u64 >= lat.d {
        return Err(Error::OutsidePetalBranch { ell });
    }
    let lp = log_xm_principal(x, lat).ok_or(Error::OutsidePetalBranch { ell })?;
    if !lp.is_finite() {
        return Err(Error::OutsidePetalBranch { ell });
    }
    let center = TAU * ell as f64 / d;
    let offset = wrap_angle(lp.im - center);
    if offset > PI / d || offset <= -PI / d {
        return Err(Error::OutsidePetalBranch { ell });
    }
    Ok(C64::new(lp.re, center + offset))
}

/// `(x^m)^λ` on branch `ℓ`.
pub fn sector_power(x: &[C64], lam: C64, ell: usize, lat: &LatticeData) -> Result<C64> {
    if lam == C64::new(0.0, 0.0) {
        return Ok(C64::new(1.0, 0.0));
    }
    Ok((lam * branch_log_xm(x, ell, lat)?).exp())
}

/// Component `ℓ` of `arg(x^m)`, the nearest multiple of `2π/d`.
pub fn shadow_component(x: &[C64], lat: &LatticeData) -> Option<usize> {
    let lp = log_xm_principal(x, lat)?;
    let d = lat.d as i64;
    Some(((lp.im * lat.d as f64 / TAU).round() as i64).rem_euclid(d) as usize)
}

/// Component of `U(ε, θ)` containing `x`, if any.
pub fn in_u(x: &[C64], spec: &PetalSpec, lat: &LatticeData) -> Option<usize> {
    let lp = log_xm_principal(x, lat)?;
    let d = lat.d as f64;
    let s = &spec.sector;
    if !(d * lp.re < s.epsilon.ln()) {
        return None;
    }
    if wrap_angle(d * lp.im).abs() >= s.theta {
        return None;
    }
    let bound = spec.gamma * lp.re;
    if x.iter().any(|xi| !(xi.norm().ln() < bound)) {
        return None;
    }
    shadow_component(x, lat)
}

/// Membership in `D(ε, θ, δ)` (or `D̃(ε, θ, δ')` when `tilde`) restricted to
/// component `ℓ`.
pub fn in_d(x: &[C64], spec: &PetalSpec, lat: &LatticeData, tilde: bool, ell: usize) -> bool {
    d_component(x, spec, lat, tilde) == Some(ell)
}

pub fn d_component(x: &[C64], spec: &PetalSpec, lat: &LatticeData, tilde: bool) -> Option<usize> {
    let radius = if tilde { spec.delta_prime } else { spec.delta };
    if x.iter().any(|xi| !(xi.norm() < radius)) {
        return None;
    }
    let lp = log_xm_principal(x, lat)?;
    let xm_big = (lp * lat.d as f64).exp();
    let inside = if tilde {
        in_c_tilde(xm_big, &spec.sector)
    } else {
        in_c(xm_big, &spec.sector)
    };
    if !inside {
        return None;
    }
    shadow_component(x, lat)
}

/// `w^{𝓝_i} = ∏_{j>=2} w_j^{𝓝_{ij}}` in log form (`None` for a zero base
/// with positive exponent, whose power is exactly zero).
pub fn log_w_power(w: &[C64], exps: &[i64]) -> Result<Option<C64>> {
    let mut acc = C64::new(0.0, 0.0);
    for (j, (wj, &e)) in w.iter().zip(exps).enumerate() {
        if e == 0 {
            continue;
        }
        if *wj == C64::new(0.0, 0.0) {
            if e < 0 {
                return Err(Error::ZeroCoordinate { index: j + 1 });
            }
            return Ok(None);
        }
        acc += wj.ln() * e as f64;
    }
    Ok(Some(acc))
}

/// Membership of `(z, w)` in `V`:
/// `|z| > 1/ε`, `|arg z| < θ` and `|w^{𝓝_i}| < r |z|^{-γ/d - Re a_i}`.
pub fn in_v(z: C64, w: &[C64], a: &[C64], spec: &PetalSpec, lat: &LatticeData) -> Result<bool> {
    let s = &spec.sector;
    if !(z.norm() > 1.0 / s.epsilon) || z.arg().abs() >= s.theta {
        return Ok(false);
    }
    let ln_z = z.norm().ln();
    let sd = spec.s(lat);
    for (i, ai) in a.iter().enumerate() {
        let rhs = spec.r.ln() + (-sd - ai.re) * ln_z;
        match log_w_power(w, lat.w_exponents(i))? {
            Some(lw) if lw.re >= rhs => return Ok(false),
            _ => {}
        }
    }
    Ok(true)
}

/// Radius `R_w` of the slice `V_w = {|z| > R_w, |arg z| < θ}`.
pub fn slice_radius(w: &[C64], a: &[C64], spec: &PetalSpec, lat: &LatticeData) -> Result<f64> {
    let sd = spec.s(lat);
    let mut r_w = 1.0 / spec.sector.epsilon;
    for (i, ai) in a.iter().enumerate() {
        if let Some(lw) = log_w_power(w, lat.w_exponents(i))? {
            let e = -sd - ai.re;
            let need = ((lw.re - spec.r.ln()) / e).exp();
            r_w = r_w.max(need);
        }
    }
    Ok(r_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn spec(epsilon: f64, gamma: f64, delta: f64, r: f64) -> PetalSpec {
        PetalSpec {
            sector: SectorSpec::new(epsilon, FRAC_PI_4).unwrap(),
            gamma,
            delta,
            delta_prime: delta / 4.0,
            r,
            factor_exponent: 1.0,
            constants: FittedConstants::default(),
        }
    }

    fn worked_lat() -> LatticeData {
        LatticeData::from_multi_index(&[1, 1]).unwrap()
    }

    #[test]
    fn sector_examples() {
        let s = SectorSpec::new(0.1, FRAC_PI_4).unwrap();
        assert!(in_c(c(0.01, 0.0), &s));
        assert!(!in_c(c(-0.01, 0.0), &s));
        let center = C64::from_polar(0.05, FRAC_PI_4);
        assert!(in_c_tilde(center, &s));
        let boundary = C64::from_polar(0.05, FRAC_PI_4 * (1.0 + 1e-12));
        assert!(!in_c(boundary, &s));
        assert!(!in_c(C64::new(0.0, 0.0), &s));
    }

    #[test]
    fn s_examples() {
        let s = SectorSpec::new(0.1, FRAC_PI_4).unwrap();
        assert_eq!(in_s(c(0.01, 0.0), c(-1.0, 0.0), 1, &s), Some(0));
        assert_eq!(in_s(c(-0.01, 0.0), c(1.0, 0.0), 1, &s), Some(0));
        let z = C64::from_polar(0.01, TAU / 3.0);
        assert_eq!(in_s(z, c(-1.0, 0.0), 3, &s), Some(1));
        assert_eq!(in_s(c(-0.01, 0.0), c(-1.0, 0.0), 1, &s), None);
    }

    #[test]
    fn s_tilde_has_p_components() {
        let s = SectorSpec::new(0.1, FRAC_PI_4).unwrap();
        for p in 1..=4u32 {
            let mut seen = std::collections::BTreeSet::new();
            for k in 0..720 {
                let z =
                    C64::from_polar(0.03f64.powf(1.0 / f64::from(p)), TAU * f64::from(k) / 720.0);
                if let Some(comp) = in_s_tilde(z, c(-1.0, 0.0), p, &s) {
                    seen.insert(comp);
                }
            }
            assert_eq!(seen.len(), p as usize);
        }
    }

    #[test]
    fn branch_log_examples() {
        let lat1 = LatticeData::from_multi_index(&[1]).unwrap();
        let v = branch_log_xm(&[c(0.1, 0.0)], 0, &lat1).unwrap();
        assert!((v - c(0.1f64.ln(), 0.0)).norm() < 1e-15);
        let v = branch_log_xm(&[c(0.1, 0.0), c(0.1, 0.0)], 0, &worked_lat()).unwrap();
        assert!((v - c(0.01f64.ln(), 0.0)).norm() < 1e-14);
        let lat3 = LatticeData::from_multi_index(&[3]).unwrap();
        let x = [C64::from_polar(0.01, TAU / 3.0)];
        let v = branch_log_xm(&x, 1, &lat3).unwrap();
        assert!((v - c(0.01f64.ln(), TAU / 3.0)).norm() < 1e-14);
        assert!(matches!(
            branch_log_xm(&x, 0, &lat3),
            Err(Error::OutsidePetalBranch { ell: 0 })
        ));
        assert!(branch_log_xm(&x, 3, &lat3).is_err());
    }

    #[test]
    fn sector_power_examples() {
        let lat = worked_lat();
        let x = [c(0.1, 0.0), c(0.1, 0.0)];
        assert_eq!(sector_power(&x, c(0.0, 0.0), 0, &lat).unwrap(), c(1.0, 0.0));
        assert!(
            (sector_power(&x, c(1.0, 0.0), 0, &lat).unwrap() - c(0.01, 0.0)).norm()
                < 4.0 * f64::EPSILON * 0.01
        );
        assert!((sector_power(&x, c(-1.0, 0.0), 0, &lat).unwrap() - c(100.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn u_examples() {
        let lat = worked_lat();
        let sp = spec(0.1, 0.25, 0.1, 0.1);
        assert_eq!(in_u(&[c(0.0, 0.0); 2], &sp, &lat), None);
        assert_eq!(in_u(&[c(0.1, 0.0), c(0.1, 0.0)], &sp, &lat), Some(0));
        assert_eq!(in_u(&[c(0.5, 0.0), c(0.02, 0.0)], &sp, &lat), None);
    }

    #[test]
    fn u_components_for_d_two() {
        let lat = LatticeData::from_multi_index(&[2]).unwrap();
        let sp = spec(0.1, 0.5, 0.1, 0.1);
        assert_eq!(in_u(&[c(0.1, 0.0)], &sp, &lat), Some(0));
        assert_eq!(in_u(&[c(-0.1, 0.0)], &sp, &lat), Some(1));
        assert_eq!(in_u(&[c(0.0, 0.1)], &sp, &lat), None);
    }

    #[test]
    fn d_examples() {
        let lat = worked_lat();
        let sp = spec(0.1, 0.25, 0.1, 0.1);
        assert!(!in_d(&[c(0.0, 0.0); 2], &sp, &lat, false, 0));
        let lat1 = LatticeData::from_multi_index(&[1]).unwrap();
        assert!(in_d(&[c(0.05, 0.0)], &sp, &lat1, false, 0));
        assert!(in_d(&[c(0.09, 0.0), c(0.09, 0.0)], &sp, &lat, false, 0));
        assert!(!in_d(&[c(0.09, 0.0), c(0.09, 0.0)], &sp, &lat, true, 0));
        assert!(in_d(&[c(0.02, 0.0), c(0.02, 0.0)], &sp, &lat, true, 0));
    }

    #[test]
    fn v_examples() {
        let lat1 = LatticeData::from_multi_index(&[1]).unwrap();
        let sp = PetalSpec {
            gamma: 0.5,
            r: 0.25,
            ..spec(0.1, 0.5, 0.1, 0.25)
        };
        let a = [c(-1.0, 0.0)];
        assert!(!in_v(c(5.0, 0.0), &[], &a, &sp, &lat1).unwrap());
        assert!(!in_v(c(15.0, 0.0), &[], &a, &sp, &lat1).unwrap());
        assert!(in_v(c(17.0, 0.0), &[], &a, &sp, &lat1).unwrap());

        let lat = worked_lat();
        let a = [c(-0.5, 0.0), c(-0.5, 0.0)];
        let sp = spec(0.1, 0.25, 0.1, 1e-2);
        assert!(!in_v(c(1e4, 0.0), &[c(1.0, 0.0)], &a, &sp, &lat).unwrap());
        assert!(!in_v(c(1e4, 0.0), &[c(1e-2, 0.0)], &a, &sp, &lat).unwrap());
        let sp = spec(0.1, 0.25, 0.1, 0.5);
        assert!(in_v(c(1e4, 0.0), &[c(1.0, 0.0)], &a, &sp, &lat).unwrap());
        assert!(matches!(
            in_v(c(1e4, 0.0), &[c(0.0, 0.0)], &a, &sp, &lat),
            Err(Error::ZeroCoordinate { .. })
        ));
    }

    #[test]
    fn slice_radius_matches_membership() {
        let lat = worked_lat();
        let a = [c(-0.5, 0.0), c(-0.5, 0.0)];
        let sp = spec(0.1, 0.25, 0.1, 0.5);
        let w = [c(3.0, 1.0)];
        let r_w = slice_radius(&w, &a, &sp, &lat).unwrap();
        assert!(in_v(c(r_w * 1.0001, 0.0), &w, &a, &sp, &lat).unwrap());
        assert!(!in_v(c(r_w * 0.9999, 0.0), &w, &a, &sp, &lat).unwrap());
    }

    mod props {
        use super::super::*;
        use crate::domains::{eta_rate, sample_u, USampling};
        use crate::germ::Dynamics;
        use crate::testkit;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn one_step_stays_in_petal_and_decays(seed in any::<u64>(), perturbed in any::<bool>()) {
                let p = if perturbed { testkit::perturbed() } else { testkit::worked() };
                let (g, lat, spec) = (&p.germ, &p.lat, &p.forward_spec);
                let eta = spec.constants.eta.unwrap();
                for x in sample_u(lat, spec, 0, 8, seed, USampling::default()) {
                    let (fx, _) = g.step(&x).unwrap();
                    prop_assert_eq!(in_u(&fx, spec, lat), Some(0));
                    prop_assert!(eta_rate(g, &x, lat, spec.gamma).unwrap() >= eta);
                    let jump = branch_log_xm(&fx, 0, lat).unwrap() - branch_log_xm(&x, 0, lat).unwrap();
                    let xm_big = x.iter().map(|c| c.norm()).product::<f64>();
                    prop_assert!(jump.norm() <= 4.0 * xm_big);
                }
            }

            #[test]
            fn petal_components_are_invariant(seed in any::<u64>(), ell in 0usize..2) {
                let p = testkit::double();
                let (g, lat, spec) = (&p.germ, &p.lat, &p.forward_spec);
                for x in sample_u(lat, spec, ell, 8, seed, USampling::default()) {
                    prop_assert_eq!(in_u(&x, spec, lat), Some(ell));
                    let (fx, _) = g.step(&x).unwrap();
                    prop_assert_eq!(in_u(&fx, spec, lat), Some(ell));
                }
            }
        }
    }
}
