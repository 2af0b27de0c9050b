use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domains::CalibrationConfig;
use crate::error::{Error, Result};
use crate::fatou::FatouOptions;
use crate::germ::{normalize, Germ};
use crate::numeric::C64;
use crate::poly::{Monomial, TruncatedPoly};

/// One monomial `coeff · x^exponent` of `A_component`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialConfig {
    pub component: usize,
    pub exponent: Vec<u32>,
    pub coeff: [f64; 2],
}

/// Serialized germ: `f_i(x) = x_i (1 + x^M (a_i + A_i(x)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GermConfig {
    #[serde(default)]
    pub n: Option<usize>,
    pub multi_index: Vec<u32>,
    /// `[re, im]` pairs.
    pub a: Vec<[f64; 2]>,
    #[serde(default)]
    pub higher: Vec<MonomialConfig>,
    #[serde(default)]
    pub degree: Option<u32>,
    #[serde(default = "default_trusted_radius")]
    pub trusted_radius: f64,
    /// Rescale so that `<a, M> = -1` before use.
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_trusted_radius() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl GermConfig {
    pub fn from_germ(g: &Germ) -> Self {
        let mut higher = Vec::new();
        for (component, p) in g.higher().iter().enumerate() {
            for t in p.terms() {
                higher.push(MonomialConfig {
                    component,
                    exponent: t.exponent.clone(),
                    coeff: [t.coeff.re, t.coeff.im],
                });
            }
        }
        Self {
            n: Some(g.n()),
            multi_index: g.multi_index().to_vec(),
            a: g.a().iter().map(|v| [v.re, v.im]).collect(),
            higher,
            degree: Some(g.truncation_degree()),
            trusted_radius: g.trusted_radius(),
            normalize: false,
        }
    }

    /// Builds the germ and, if requested, normalizes it. Returns the germ
    /// together with the scaling `alpha` (all ones when not normalized).
    pub fn build(&self) -> Result<(Germ, Vec<C64>)> {
        let n = self.multi_index.len();
        if let Some(m) = self.n {
            if m != n {
                return Err(Error::Config(format!(
                    "n = {m} but the multi-index has {n} entries"
                )));
            }
        }
        let degree = self.degree.unwrap_or_else(|| {
            self.higher
                .iter()
                .map(|t| t.exponent.iter().sum::<u32>())
                .max()
                .unwrap_or(1)
                .max(1)
        });
        let mut terms: Vec<Vec<Monomial>> = vec![Vec::new(); n];
        for t in &self.higher {
            let slot = terms.get_mut(t.component).ok_or_else(|| {
                Error::Config(format!("monomial component {} out of range", t.component))
            })?;
            slot.push(Monomial {
                exponent: t.exponent.clone(),
                coeff: C64::new(t.coeff[0], t.coeff[1]),
            });
        }
        let higher = terms
            .into_iter()
            .map(|ts| TruncatedPoly::new(n, degree, ts))
            .collect::<Result<_>>()?;
        let a = self.a.iter().map(|v| C64::new(v[0], v[1])).collect();
        let g = Germ::new(self.multi_index.clone(), a, higher, self.trusted_radius)?;
        if self.normalize {
            normalize(&g)
        } else {
            Ok((g, vec![C64::new(1.0, 0.0); n]))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSizes {
    pub invariance: usize,
    pub invariants: usize,
    pub pairs: usize,
    pub chart: usize,
    pub fatou: usize,
    pub covering: usize,
    pub escape: usize,
    pub flower: usize,
}

impl Default for SampleSizes {
    fn default() -> Self {
        Self {
            invariance: 10_000,
            invariants: 1_000,
            pairs: 100,
            chart: 1_000,
            fatou: 100,
            covering: 100_000,
            escape: 10_000,
            flower: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub psi: f64,
    pub chart: f64,
    pub conjugacy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psi: 1e-10,
            chart: 1e-10,
            conjugacy: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub forward: usize,
    pub backward: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            forward: 1_000_000,
            backward: 1_000_000,
        }
    }
}

/// Settings of the one-dimensional flower run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowerConfig {
    /// Starting point of the traced orbit, `[re, im]`.
    pub start: [f64; 2],
    pub steps: usize,
    /// Radius of the start net: `|a z^p| < net_radius · ε`.
    pub net_radius: f64,
    pub net_steps: usize,
}

impl Default for FlowerConfig {
    fn default() -> Self {
        Self {
            start: [0.01, 0.0],
            steps: 100_000,
            net_radius: 0.5,
            net_steps: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoveringConfig {
    /// Polydisc radius; defaults to the calibrated `δ'`.
    pub radius: Option<f64>,
    /// Points with `|x_i| < band · radius` for some `M_i > 0` are excluded.
    pub band: f64,
}

impl Default for CoveringConfig {
    fn default() -> Self {
        Self {
            radius: None,
            band: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeConfig {
    pub delta: f64,
    /// Budget for re-running orbits that did not escape within the main
    /// budget; the report then records their actual escape times.
    pub extended_budget: Option<usize>,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            extended_budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub germ: GermConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub samples: SampleSizes,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub budgets: BudgetConfig,
    #[serde(default)]
    pub fatou: FatouOptions,
    #[serde(default)]
    pub flower: FlowerConfig,
    #[serde(default)]
    pub covering: CoveringConfig,
    #[serde(default)]
    pub escape: EscapeConfig,
}

impl ExperimentConfig {
    pub fn new(germ: GermConfig) -> Self {
        Self {
            germ,
            seed: 0,
            calibration: CalibrationConfig::default(),
            samples: SampleSizes::default(),
            tolerances: Tolerances::default(),
            budgets: BudgetConfig::default(),
            fatou: FatouOptions::default(),
            flower: FlowerConfig::default(),
            covering: CoveringConfig::default(),
            escape: EscapeConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces every seed by `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.calibration.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.samples;
        let sizes = [
            ("invariance", s.invariance),
            ("invariants", s.invariants),
            ("pairs", s.pairs),
            ("chart", s.chart),
            ("fatou", s.fatou),
            ("covering", s.covering),
            ("escape", s.escape),
            ("flower", s.flower),
            ("calibration.samples", self.calibration.samples),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!(
                "sample size `{name}` must be at least 1"
            )));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("psi", t.psi),
            ("chart", t.chart),
            ("conjugacy", t.conjugacy),
            ("fatou.tol", self.fatou.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "tolerance `{name}` must be positive"
                )));
            }
        }
        if !(self.escape.delta > 0.0) || !(self.covering.band >= 0.0 && self.covering.band < 1.0) {
            return Err(Error::Config(
                "escape.delta must be positive and covering.band in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}
