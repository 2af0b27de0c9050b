//! C ABI for flowerlab.
//!
//! Objects are exposed as opaque handles created by `fl_*_new` style
//! functions and released with the matching `fl_*_free`. Every fallible
//! function returns an [`FlStatus`]; on failure a message is available from
//! [`fl_last_error`] on the calling thread. Complex vectors are passed as
//! interleaved `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flowerlab::domains::CalibrationConfig;
use flowerlab::germ::{normalize, Germ};
use flowerlab::harness::{classify_point, ClassificationLabel, ExperimentConfig, FlowerPetals};
use flowerlab::invariants::{psi_i, PsiOptions};
use flowerlab::lattice::LatticeData;
use flowerlab::Error;
use num_complex::Complex64;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DegenerateGerm = 3,
    InvalidGerm = 4,
    Lattice = 5,
    OutsideDomain = 6,
    NoConvergence = 7,
    CalibrationFailed = 8,
    PreconditionViolated = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

/// Classification kinds.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlLabelKind {
    FixedSet = 0,
    OmegaPlus = 1,
    OmegaMinus = 2,
    Escaped = 3,
    Undetermined = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FlLabel {
    pub kind: FlLabelKind,
    /// Petal index for `OmegaPlus` / `OmegaMinus`, otherwise 0.
    pub ell: u32,
    pub steps: u64,
}

/// Calibrated petal parameters.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FlPetalSpec {
    pub epsilon: f64,
    pub theta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub r: f64,
}

/// Opaque germ handle.
pub struct FlGerm(Germ);

/// Opaque handle to forward and backward petals of a germ.
pub struct FlPetals(FlowerPetals);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> FlStatus {
    match e {
        Error::DegenerateGerm => FlStatus::DegenerateGerm,
        Error::InvalidGerm(_) => FlStatus::InvalidGerm,
        Error::ZeroMultiIndex
        | Error::NotPrimitive { .. }
        | Error::BadOrdering { .. }
        | Error::Overflow => FlStatus::Lattice,
        Error::OutsidePetalBranch { .. }
        | Error::OutsidePetal { .. }
        | Error::OutsideV
        | Error::BranchError
        | Error::ZeroCoordinate { .. }
        | Error::EmptySlice { .. } => FlStatus::OutsideDomain,
        Error::NoConvergence { .. } | Error::NotReached { .. } => FlStatus::NoConvergence,
        Error::CalibrationFailed { .. } | Error::Uncalibrated(_) | Error::EmptySample => {
            FlStatus::CalibrationFailed
        }
        Error::PreconditionViolated(_) => FlStatus::PreconditionViolated,
        Error::Config(_) | Error::Json(_) => FlStatus::Config,
        Error::Io(_) | Error::Csv(_) => FlStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), FlStatus>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            FlStatus::Panic
        }
    }
}

fn fail(e: Error) -> FlStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null() -> FlStatus {
    set_error("null pointer argument");
    FlStatus::NullPointer
}

unsafe fn complex_slice(ptr: *const f64, n: usize) -> Result<Vec<Complex64>, FlStatus> {
    if ptr.is_null() {
        return Err(null());
    }
    let raw = std::slice::from_raw_parts(ptr, 2 * n);
    Ok(raw
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect())
}

unsafe fn write_complex(out: *mut f64, v: &[Complex64]) {
    let dst = std::slice::from_raw_parts_mut(out, 2 * v.len());
    for (k, c) in v.iter().enumerate() {
        dst[2 * k] = c.re;
        dst[2 * k + 1] = c.im;
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates the germ `f_i(x) = x_i (1 + x^M a_i)` and normalizes it so that
/// `<a, M> = -1`.
///
/// # Safety
/// `multi_index` points to `n` values, `a` to `2n` doubles, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_germ_new_model(
    n: usize,
    multi_index: *const u32,
    a: *const f64,
    out: *mut *mut FlGerm,
) -> FlStatus {
    guard(|| {
        if multi_index.is_null() || out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let m = std::slice::from_raw_parts(multi_index, n).to_vec();
        let a = complex_slice(a, n)?;
        let g = Germ::model(m, a).map_err(fail)?;
        let (g, _) = normalize(&g).map_err(fail)?;
        *out = Box::into_raw(Box::new(FlGerm(g)));
        Ok(())
    })
}

/// Builds a germ from the `[germ]` section of a TOML experiment document.
///
/// # Safety
/// `toml` is a NUL-terminated string, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_germ_from_toml(toml: *const c_char, out: *mut *mut FlGerm) -> FlStatus {
    guard(|| {
        if toml.is_null() || out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(toml).to_str().map_err(|_| {
            set_error("configuration is not UTF-8");
            FlStatus::InvalidArgument
        })?;
        let cfg = ExperimentConfig::from_toml_str(text).map_err(fail)?;
        let (g, _) = cfg.germ.build().map_err(fail)?;
        *out = Box::into_raw(Box::new(FlGerm(g)));
        Ok(())
    })
}

/// # Safety
/// `germ` is null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fl_germ_free(germ: *mut FlGerm) {
    if !germ.is_null() {
        drop(Box::from_raw(germ));
    }
}

/// Dimension of the germ, or 0 for a null handle.
///
/// # Safety
/// `germ` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_germ_dim(germ: *const FlGerm) -> usize {
    germ.as_ref().map_or(0, |g| g.0.n())
}

/// Evaluates `f(x)`; `x` and `out` hold `2n` doubles.
///
/// # Safety
/// Pointers are valid for `2n` doubles, `germ` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_germ_evaluate(
    germ: *const FlGerm,
    x: *const f64,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let g = germ.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let x = complex_slice(x, g.0.n())?;
        write_complex(out, &g.0.evaluate(&x));
        Ok(())
    })
}

/// Evaluates `f^{-1}(y)` by Newton's method to relative accuracy `tol`.
///
/// # Safety
/// Pointers are valid for `2n` doubles, `germ` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_germ_evaluate_inverse(
    germ: *const FlGerm,
    y: *const f64,
    tol: f64,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let g = germ.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let y = complex_slice(y, g.0.n())?;
        let x = g.0.evaluate_inverse(&y, tol).map_err(fail)?;
        write_complex(out, &x);
        Ok(())
    })
}

/// Calibrates forward and backward petals with default settings and the
/// given seed.
///
/// # Safety
/// `germ` is a live handle, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_petals_calibrate(
    germ: *const FlGerm,
    seed: u64,
    out: *mut *mut FlPetals,
) -> FlStatus {
    guard(|| {
        let g = germ.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let cfg = CalibrationConfig {
            seed,
            ..Default::default()
        };
        let p = FlowerPetals::calibrate(&g.0, &cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(FlPetals(p)));
        Ok(())
    })
}

/// # Safety
/// `petals` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_petals_free(petals: *mut FlPetals) {
    if !petals.is_null() {
        drop(Box::from_raw(petals));
    }
}

/// Number of petals `d = gcd(M)`, or 0 for a null handle.
///
/// # Safety
/// `petals` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_petals_count(petals: *const FlPetals) -> u64 {
    petals.as_ref().map_or(0, |p| p.0.lat.d)
}

/// Forward (`backward == 0`) or backward petal parameters.
///
/// # Safety
/// `petals` is a live handle, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_petals_spec(
    petals: *const FlPetals,
    backward: i32,
    out: *mut FlPetalSpec,
) -> FlStatus {
    guard(|| {
        let p = petals.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        let s = if backward == 0 {
            &p.0.forward_spec
        } else {
            &p.0.backward_spec
        };
        *out = FlPetalSpec {
            epsilon: s.sector.epsilon,
            theta: s.sector.theta,
            gamma: s.gamma,
            delta: s.delta,
            delta_prime: s.delta_prime,
            r: s.r,
        };
        Ok(())
    })
}

/// Classifies `x` (`2n` doubles) by forward then backward capture.
///
/// # Safety
/// `petals` is a live handle, `x` holds `2n` doubles, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_classify(
    petals: *const FlPetals,
    x: *const f64,
    forward_budget: u64,
    backward_budget: u64,
    out: *mut FlLabel,
) -> FlStatus {
    guard(|| {
        let p = petals.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        let x = complex_slice(x, p.0.germ.n())?;
        let budgets =
            p.0.default_budgets(forward_budget as usize, backward_budget as usize);
        let c = classify_point(&x, &p.0, &budgets);
        let (kind, ell) = match c.label {
            ClassificationLabel::FixedSet => (FlLabelKind::FixedSet, 0),
            ClassificationLabel::OmegaPlus(l) => (FlLabelKind::OmegaPlus, l as u32),
            ClassificationLabel::OmegaMinus(l) => (FlLabelKind::OmegaMinus, l as u32),
            ClassificationLabel::Escaped => (FlLabelKind::Escaped, 0),
            ClassificationLabel::Undetermined => (FlLabelKind::Undetermined, 0),
        };
        *out = FlLabel {
            kind,
            ell,
            steps: c.steps as u64,
        };
        Ok(())
    })
}

/// `ψ_I(x)` on petal `ell` for the integer index `I` (`n` entries). Writes
/// the value to `out` (2 doubles) and the error bound to `tail_bound`.
///
/// # Safety
/// `petals` is a live handle; `x` holds `2n` doubles, `index` `n` values,
/// `out` 2 doubles; `tail_bound` is writable.
#[no_mangle]
pub unsafe extern "C" fn fl_psi(
    petals: *const FlPetals,
    x: *const f64,
    index: *const i64,
    ell: u32,
    tol: f64,
    out: *mut f64,
    tail_bound: *mut f64,
) -> FlStatus {
    guard(|| {
        let p = petals.as_ref().ok_or_else(null)?;
        if index.is_null() || out.is_null() || tail_bound.is_null() {
            return Err(null());
        }
        if tol.is_nan() || tol <= 0.0 {
            set_error("tolerance must be positive");
            return Err(FlStatus::InvalidArgument);
        }
        let n = p.0.germ.n();
        let x = complex_slice(x, n)?;
        let index = std::slice::from_raw_parts(index, n);
        let e = psi_i(
            &x,
            index,
            ell as usize,
            &p.0.germ,
            &p.0.lat,
            &p.0.forward_spec,
            tol,
            PsiOptions::default(),
        )
        .map_err(fail)?;
        write_complex(out, &[e.value]);
        *tail_bound = e.tail_bound;
        Ok(())
    })
}

/// Unimodular completion of `M` (`n` entries): writes `d`, and the `n × n`
/// row-major matrices 𝓜 and 𝓝 = 𝓜⁻¹.
///
/// # Safety
/// `multi_index` holds `n` values, `m_mat` and `n_mat` `n²` values, `d` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fl_lattice_completion(
    n: usize,
    multi_index: *const u32,
    d: *mut u64,
    m_mat: *mut i64,
    n_mat: *mut i64,
) -> FlStatus {
    guard(|| {
        if multi_index.is_null() || d.is_null() || m_mat.is_null() || n_mat.is_null() {
            return Err(null());
        }
        let m = std::slice::from_raw_parts(multi_index, n);
        let lat = LatticeData::from_multi_index(m).map_err(fail)?;
        *d = lat.d;
        let mm = std::slice::from_raw_parts_mut(m_mat, n * n);
        let nn = std::slice::from_raw_parts_mut(n_mat, n * n);
        for i in 0..n {
            for j in 0..n {
                mm[i * n + j] = lat.m_mat[i][j];
                nn[i * n + j] = lat.n_mat[i][j];
            }
        }
        Ok(())
    })
}
