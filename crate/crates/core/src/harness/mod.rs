//! Experiment configuration, point classification, the verification suites
//! and dataset export.

pub mod classify;
pub mod config;
pub mod export;
pub mod flower;
pub mod suites;
pub mod theorems;

pub use classify::{
    classify_point, covering, sample_polydisc, Budgets, Classification, ClassificationLabel,
    CoveringStats, FlowerPetals, LabeledPoint,
};
pub use config::{
    BudgetConfig, CoveringConfig, EscapeConfig, ExperimentConfig, FlowerConfig, GermConfig,
    MonomialConfig, SampleSizes, Tolerances,
};
pub use flower::{verify_flower_1d, FlowerReport, TraceRow};
pub use suites::{
    chart_suite, conjugacy_suite, invariance_suite, invariant_suite, ChartStats, ConjugacyStats,
    InvarianceStats, InvariantStats, RayPoint,
};
pub use theorems::{
    theorem_a_with, verify_theorem_a, verify_theorem_b, TheoremAReport, TheoremBReport,
};
