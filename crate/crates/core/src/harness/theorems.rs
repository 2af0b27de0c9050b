use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::{covering, sample_polydisc, CoveringStats, FlowerPetals};
use super::config::ExperimentConfig;
use super::suites::{conjugacy_suite, invariance_suite, ConjugacyStats, InvarianceStats};
use crate::domains::PetalSpec;
use crate::error::{Error, Result};
use crate::germ::Germ;
use crate::numeric::C64;

/// Ray moduli at which `β(z)/z` is reported.
pub const RAY_MODULI: [f64; 3] = [1e3, 1e4, 1e5];

/// Per-component summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub ell: usize,
    pub invariance_passed: bool,
    pub forward_points: usize,
    pub backward_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremAReport {
    pub multi_index: Vec<u32>,
    pub a: Vec<C64>,
    pub d: u64,
    pub forward_spec: PetalSpec,
    pub backward_spec: PetalSpec,
    pub invariance: Vec<InvarianceStats>,
    pub covering: CoveringStats,
    pub conjugacy: ConjugacyStats,
    pub components: Vec<ComponentReport>,
    pub passed: bool,
}

fn require_attracting(g: &Germ) -> Result<()> {
    if let Some(i) = g.a().iter().position(|ai| ai.re >= 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "Re(a_{i}) = {} is not negative",
            g.a()[i].re
        )));
    }
    Ok(())
}

/// Calibrates forward and backward petals, then checks invariance, covering
/// of a punctured polydisc and the Fatou conjugacy.
pub fn verify_theorem_a(cfg: &ExperimentConfig) -> Result<TheoremAReport> {
    let (g, _) = cfg.germ.build()?;
    require_attracting(&g)?;
    let petals = FlowerPetals::calibrate(&g, &cfg.calibration)?;
    theorem_a_with(cfg, &petals)
}

/// [`verify_theorem_a`] with already calibrated petals.
pub fn theorem_a_with(cfg: &ExperimentConfig, petals: &FlowerPetals) -> Result<TheoremAReport> {
    let g = &petals.germ;
    require_attracting(g)?;
    let lat = &petals.lat;
    let spec = &petals.forward_spec;
    let invariance = invariance_suite(
        g,
        lat,
        spec,
        cfg.samples.invariance,
        cfg.calibration.fit_orbits,
        cfg.calibration.fit_orbit_len,
        cfg.seed,
    )?;
    let budgets = petals.default_budgets(cfg.budgets.forward, cfg.budgets.backward);
    let radius = cfg.covering.radius.unwrap_or(spec.delta_prime);
    let (cover, _) = covering(
        petals,
        &budgets,
        radius,
        cfg.covering.band,
        cfg.samples.covering,
        cfg.seed,
    );
    let conjugacy = conjugacy_suite(
        g,
        lat,
        spec,
        cfg.samples.fatou,
        cfg.tolerances.conjugacy,
        cfg.fatou,
        &RAY_MODULI,
        cfg.seed,
    )?;
    let d = lat.d as usize;
    let components: Vec<ComponentReport> = (0..d)
        .map(|ell| ComponentReport {
            ell,
            invariance_passed: invariance[ell].passed(),
            forward_points: cover.forward[ell],
            backward_points: cover.backward[ell],
        })
        .collect();
    let passed = invariance.iter().all(InvarianceStats::passed)
        && cover.covered_fraction >= 0.999
        && cover.double_capture == 0
        && cover.forward_petals() == d
        && cover.backward_petals() == d
        && conjugacy.passed(1e-2);
    Ok(TheoremAReport {
        multi_index: g.multi_index().to_vec(),
        a: g.a().to_vec(),
        d: lat.d,
        forward_spec: spec.clone(),
        backward_spec: petals.backward_spec.clone(),
        invariance,
        covering: cover,
        conjugacy,
        components,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeException {
    pub x: Vec<C64>,
    pub forward: Option<usize>,
    pub backward: Option<usize>,
    /// Escape times under the extended budget, for the directions that
    /// missed the main one.
    pub forward_extended: Option<usize>,
    pub backward_extended: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremBReport {
    pub multi_index: Vec<u32>,
    pub a: Vec<C64>,
    pub delta: f64,
    pub budget_forward: usize,
    pub budget_backward: usize,
    pub samples: usize,
    pub forward_max: usize,
    pub backward_max: usize,
    pub forward_exceptions: usize,
    pub backward_exceptions: usize,
    pub exceptions: Vec<EscapeException>,
    pub passed: bool,
}

fn escape_time(
    mut step: impl FnMut(&[C64]) -> Option<Vec<C64>>,
    x: &[C64],
    delta: f64,
    budget: usize,
) -> Option<usize> {
    let mut cur = x.to_vec();
    for j in 1..=budget {
        cur = step(&cur)?;
        if cur.iter().any(|c| !c.is_finite() || c.norm() >= delta) {
            return Some(j);
        }
    }
    None
}

/// Samples the polydisc of radius `δ` off the fixed set and records when the
/// forward and backward orbits leave it.
pub fn verify_theorem_b(cfg: &ExperimentConfig) -> Result<TheoremBReport> {
    let (g, _) = cfg.germ.build()?;
    if g.a().iter().all(|ai| ai.re < 0.0) {
        return Err(Error::PreconditionViolated(
            "every Re(a_i) is negative".into(),
        ));
    }
    let delta = cfg.escape.delta;
    let mi = g.multi_index();
    let pts: Vec<Vec<C64>> = sample_polydisc(g.n(), delta, cfg.samples.escape, cfg.seed)
        .into_iter()
        .filter(|x| x.iter().zip(mi).all(|(xi, &m)| m == 0 || xi.norm() > 0.0))
        .collect();
    let tol = 1e-14;
    let forward = |x: &[C64], budget: usize| escape_time(|p| Some(g.evaluate(p)), x, delta, budget);
    let backward = |x: &[C64], budget: usize| {
        escape_time(|p| g.evaluate_inverse(p, tol).ok(), x, delta, budget)
    };
    let times: Vec<(Option<usize>, Option<usize>)> = pts
        .par_iter()
        .map(|x| {
            (
                forward(x, cfg.budgets.forward),
                backward(x, cfg.budgets.backward),
            )
        })
        .collect();
    let missed: Vec<_> = pts
        .iter()
        .zip(&times)
        .filter(|(_, t)| t.0.is_none() || t.1.is_none())
        .collect();
    let exceptions: Vec<EscapeException> = missed
        .par_iter()
        .map(|(x, t)| {
            let rerun = |done: Option<usize>, f: &dyn Fn(&[C64], usize) -> Option<usize>| match (
                done,
                cfg.escape.extended_budget,
            ) {
                (None, Some(b)) => f(x, b),
                _ => None,
            };
            EscapeException {
                x: x.to_vec(),
                forward: t.0,
                backward: t.1,
                forward_extended: rerun(t.0, &forward),
                backward_extended: rerun(t.1, &backward),
            }
        })
        .collect();
    let forward_exceptions = times.iter().filter(|t| t.0.is_none()).count();
    let backward_exceptions = times.iter().filter(|t| t.1.is_none()).count();
    Ok(TheoremBReport {
        multi_index: mi.to_vec(),
        a: g.a().to_vec(),
        delta,
        budget_forward: cfg.budgets.forward,
        budget_backward: cfg.budgets.backward,
        samples: pts.len(),
        forward_max: times.iter().filter_map(|t| t.0).max().unwrap_or(0),
        backward_max: times.iter().filter_map(|t| t.1).max().unwrap_or(0),
        forward_exceptions,
        backward_exceptions,
        exceptions,
        passed: forward_exceptions == 0 && backward_exceptions == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::GermConfig;

    fn config(multi_index: Vec<u32>, a: Vec<[f64; 2]>) -> ExperimentConfig {
        let n = multi_index.len();
        let mut cfg = ExperimentConfig::new(GermConfig {
            n: Some(n),
            multi_index,
            a,
            higher: vec![],
            degree: None,
            trusted_radius: 1.0,
            normalize: true,
        });
        cfg.calibration.samples = 1000;
        cfg.calibration.fit_orbits = 8;
        cfg.calibration.fit_orbit_len = 500;
        cfg.calibration.chart_samples = 16;
        cfg.samples.invariance = 500;
        cfg.samples.covering = 2000;
        cfg.samples.fatou = 8;
        cfg.samples.escape = 200;
        cfg
    }

    #[test]
    fn classical_theorem_a() {
        let r = verify_theorem_a(&config(vec![1], vec![[-1.0, 0.0]])).unwrap();
        assert_eq!(r.d, 1);
        assert_eq!(r.covering.forward_petals(), 1);
        assert_eq!(r.covering.backward_petals(), 1);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn two_petals_for_square_tangency() {
        // f(z) = z (1 - z^2 / 2)
        let r = verify_theorem_a(&config(vec![2], vec![[-0.5, 0.0]])).unwrap();
        assert_eq!(r.d, 2);
        assert_eq!(r.covering.forward_petals(), 2);
        assert_eq!(r.covering.backward_petals(), 2);
    }

    #[test]
    fn theorem_a_rejects_repelling_direction() {
        let err = verify_theorem_a(&config(vec![1, 1], vec![[-2.0, 0.0], [1.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::PreconditionViolated(_)));
    }

    #[test]
    fn theorem_b_small_sample() {
        let mut cfg = config(vec![1, 1], vec![[-2.0, 0.0], [1.0, 0.0]]);
        cfg.budgets.forward = 100_000;
        cfg.budgets.backward = 100_000;
        let r = verify_theorem_b(&cfg).unwrap();
        assert_eq!(r.samples, 200);
        assert!(r.forward_max > 0 && r.backward_max > 0);
    }

    #[test]
    fn theorem_b_rejects_attracting_germ() {
        let err =
            verify_theorem_b(&config(vec![1, 1], vec![[-0.5, 0.0], [-0.5, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::PreconditionViolated(_)));
    }
}
