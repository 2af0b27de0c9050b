use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the library. Variants mirror the failure modes of each
/// stage of the pipeline (germ, lattice, domains, invariants, charts, harness).
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate germ: <a, M> = 0")]
    DegenerateGerm,

    #[error("invalid germ: {0}")]
    InvalidGerm(String),

    #[error("negative exponent meets a zero coordinate (index {index})")]
    ZeroCoordinate { index: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("multi-index is identically zero")]
    ZeroMultiIndex,

    #[error("vector is not primitive (gcd = {gcd})")]
    NotPrimitive { gcd: u64 },

    #[error("zero entry at position {index} precedes a non-zero entry")]
    BadOrdering { index: usize },

    #[error("integer overflow while converting lattice data")]
    Overflow,

    #[error("point is outside the branch window of petal {ell}")]
    OutsidePetalBranch { ell: usize },

    #[error("point is outside petal U_{ell}")]
    OutsidePetal { ell: usize },

    #[error("chart point is outside the domain V")]
    OutsideV,

    #[error("z is outside the sector branch")]
    BranchError,

    #[error("calibration failed: {reason}")]
    CalibrationFailed {
        reason: String,
        witness: Option<Vec<Complex64>>,
    },

    #[error("sample is empty")]
    EmptySample,

    #[error("slice V_w is empty or not representable (R_w = {r_w:e})")]
    EmptySlice { r_w: f64 },

    #[error("target {target} not reached by any translate up to j = {max_j}")]
    NotReached { target: Complex64, max_j: u64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("missing fitted constant `{0}`; calibrate the petal first")]
    Uncalibrated(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
