use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{calibrate_petal, calibrate_petal_for, in_u, CalibrationConfig, PetalSpec};
use crate::error::Result;
use crate::germ::{BackwardGerm, Dynamics, Germ};
use crate::lattice::LatticeData;
use crate::numeric::C64;
use crate::sampling::Halton;

/// Where the orbit of a point ends up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ell")]
pub enum ClassificationLabel {
    FixedSet,
    OmegaPlus(usize),
    OmegaMinus(usize),
    Escaped,
    Undetermined,
}

impl std::fmt::Display for ClassificationLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::FixedSet => write!(f, "fixed"),
            Self::OmegaPlus(l) => write!(f, "omega+{l}"),
            Self::OmegaMinus(l) => write!(f, "omega-{l}"),
            Self::Escaped => write!(f, "escaped"),
            Self::Undetermined => write!(f, "undetermined"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub forward: usize,
    pub backward: usize,
    /// An orbit that leaves the polydisc of this radius has escaped.
    pub escape_radius: f64,
}

/// Calibrated forward petals of a germ and of its inverse.
#[derive(Clone, Debug)]
pub struct FlowerPetals {
    pub germ: Germ,
    pub backward: BackwardGerm,
    pub lat: LatticeData,
    pub forward_spec: PetalSpec,
    pub backward_spec: PetalSpec,
}

impl FlowerPetals {
    pub fn calibrate(germ: &Germ, cfg: &CalibrationConfig) -> Result<Self> {
        let lat = LatticeData::from_multi_index(germ.multi_index())?;
        let forward_spec = calibrate_petal(germ, &lat, cfg)?;
        let backward = BackwardGerm::new(germ);
        let backward_spec = calibrate_petal_for(&backward, &lat, germ.trusted_radius(), cfg)?;
        Ok(Self {
            germ: germ.clone(),
            backward,
            lat,
            forward_spec,
            backward_spec,
        })
    }

    pub fn default_budgets(&self, forward: usize, backward: usize) -> Budgets {
        Budgets {
            forward,
            backward,
            escape_radius: 0.5 * self.germ.trusted_radius().min(1.0),
        }
    }
}

/// A sample point with its classification (`None` inside the excluded band).
pub type LabeledPoint = (Vec<C64>, Option<Classification>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ClassificationLabel,
    /// Iterations spent in the direction that decided the label.
    pub steps: usize,
    /// The forward orbit entered a second, different forward petal within a
    /// few steps after capture.
    pub double_capture: bool,
}

enum Run {
    Captured(usize, usize),
    Escaped,
    Exhausted,
}

fn run(
    dynamics: &dyn Dynamics,
    start: &[C64],
    spec: &PetalSpec,
    lat: &LatticeData,
    budget: usize,
    radius: f64,
) -> Run {
    let mut cur = start.to_vec();
    for j in 0..=budget {
        if let Some(ell) = in_u(&cur, spec, lat) {
            return Run::Captured(ell, j);
        }
        if cur.iter().any(|c| !c.is_finite() || c.norm() > radius) {
            return Run::Escaped;
        }
        if j == budget {
            break;
        }
        match dynamics.step(&cur) {
            Ok((next, _)) => cur = next,
            Err(_) => return Run::Escaped,
        }
    }
    Run::Exhausted
}

const CAPTURE_CONFIRM_STEPS: usize = 8;

fn confirms(
    dynamics: &dyn Dynamics,
    start: &[C64],
    ell: usize,
    spec: &PetalSpec,
    lat: &LatticeData,
) -> bool {
    let mut cur = start.to_vec();
    for _ in 0..CAPTURE_CONFIRM_STEPS {
        cur = match dynamics.step(&cur) {
            Ok((next, _)) => next,
            Err(_) => return false,
        };
        if in_u(&cur, spec, lat) != Some(ell) {
            return false;
        }
    }
    true
}

fn advance(dynamics: &dyn Dynamics, x: &[C64], steps: usize) -> Vec<C64> {
    let mut cur = x.to_vec();
    for _ in 0..steps {
        cur = dynamics.step(&cur).map(|(n, _)| n).unwrap_or(cur);
    }
    cur
}

/// Classifies `x` by forward capture in some `U_ℓ`, then by backward
/// capture in a petal of the inverse germ.
pub fn classify_point(x: &[C64], petals: &FlowerPetals, budgets: &Budgets) -> Classification {
    let on_fixed_set = x
        .iter()
        .zip(petals.germ.multi_index())
        .any(|(xi, &mi)| mi > 0 && xi.norm() == 0.0);
    if on_fixed_set {
        return Classification {
            label: ClassificationLabel::FixedSet,
            steps: 0,
            double_capture: false,
        };
    }
    let lat = &petals.lat;
    let forward = run(
        &petals.germ,
        x,
        &petals.forward_spec,
        lat,
        budgets.forward,
        budgets.escape_radius,
    );
    if let Run::Captured(ell, j) = forward {
        let at = advance(&petals.germ, x, j);
        let double_capture = !confirms(&petals.germ, &at, ell, &petals.forward_spec, lat);
        return Classification {
            label: ClassificationLabel::OmegaPlus(ell),
            steps: j,
            double_capture,
        };
    }
    let y = petals.backward.from_original(x);
    let backward = run(
        &petals.backward,
        &y,
        &petals.backward_spec,
        lat,
        budgets.backward,
        budgets.escape_radius,
    );
    let label = match (forward, backward) {
        (_, Run::Captured(ell, j)) => {
            return Classification {
                label: ClassificationLabel::OmegaMinus(ell),
                steps: j,
                double_capture: false,
            }
        }
        (Run::Escaped, Run::Escaped) => ClassificationLabel::Escaped,
        _ => ClassificationLabel::Undetermined,
    };
    Classification {
        label,
        steps: budgets.forward.max(budgets.backward),
        double_capture: false,
    }
}

/// Quasi-random points of the polydisc `|x_i| < radius`, uniform in area in
/// each coordinate.
pub fn sample_polydisc(n: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let halton = Halton::new(2 * n, seed);
    (0..count as u64)
        .map(|k| {
            let u = halton.point(k);
            (0..n)
                .map(|i| C64::from_polar(radius * u[2 * i].sqrt(), TAU * u[2 * i + 1]))
                .collect()
        })
        .collect()
}

/// Counts of a covering run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoveringStats {
    pub radius: f64,
    pub band: f64,
    pub sampled: usize,
    pub excluded_band: usize,
    pub fixed_set: usize,
    pub forward: Vec<usize>,
    pub backward: Vec<usize>,
    pub escaped: usize,
    pub undetermined: usize,
    pub double_capture: usize,
    pub max_steps: usize,
    pub covered_fraction: f64,
}

impl CoveringStats {
    pub fn forward_petals(&self) -> usize {
        self.forward.iter().filter(|&&c| c > 0).count()
    }

    pub fn backward_petals(&self) -> usize {
        self.backward.iter().filter(|&&c| c > 0).count()
    }
}

/// Classifies a quasi-random sample of the punctured polydisc and returns
/// the counts together with the per-point labels (excluded points carry
/// `None`).
pub fn covering(
    petals: &FlowerPetals,
    budgets: &Budgets,
    radius: f64,
    band: f64,
    count: usize,
    seed: u64,
) -> (CoveringStats, Vec<LabeledPoint>) {
    let n = petals.germ.n();
    let d = petals.lat.d as usize;
    let mi = petals.germ.multi_index();
    let pts = sample_polydisc(n, radius, count, seed);
    let results: Vec<Option<Classification>> = pts
        .par_iter()
        .map(|x| {
            let in_band = x
                .iter()
                .zip(mi)
                .any(|(xi, &m)| m > 0 && xi.norm() < band * radius);
            (!in_band).then(|| classify_point(x, petals, budgets))
        })
        .collect();
    let mut stats = CoveringStats {
        radius,
        band,
        sampled: count,
        forward: vec![0; d],
        backward: vec![0; d],
        ..Default::default()
    };
    for r in &results {
        let Some(c) = r else {
            stats.excluded_band += 1;
            continue;
        };
        match c.label {
            ClassificationLabel::FixedSet => stats.fixed_set += 1,
            ClassificationLabel::OmegaPlus(l) => stats.forward[l] += 1,
            ClassificationLabel::OmegaMinus(l) => stats.backward[l] += 1,
            ClassificationLabel::Escaped => stats.escaped += 1,
            ClassificationLabel::Undetermined => stats.undetermined += 1,
        }
        if c.double_capture {
            stats.double_capture += 1;
        }
        if matches!(
            c.label,
            ClassificationLabel::OmegaPlus(_) | ClassificationLabel::OmegaMinus(_)
        ) {
            stats.max_steps = stats.max_steps.max(c.steps);
        }
    }
    let eligible = count - stats.excluded_band - stats.fixed_set;
    let covered: usize = stats.forward.iter().chain(&stats.backward).sum();
    stats.covered_fraction = if eligible == 0 {
        1.0
    } else {
        covered as f64 / eligible as f64
    };
    (stats, pts.into_iter().zip(results).collect())
}
