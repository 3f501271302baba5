//! C ABI over the proxyprobe scoring, metric and correlation routines.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`PpStatus`]; results go through out
//!   pointers that are written only on success.
//! * Feature matrices are dense row-major `double` arrays of `rows × cols`.
//! * Models are opaque handles created by a `*_fit` call and released with
//!   the matching `*_free`. Passing NULL to a free function is a no-op.
//! * After a non-OK status, [`pp_last_error`] returns a message for the
//!   calling thread. The pointer stays valid until the next failing call on
//!   that thread.
//! * Panics never cross the boundary; they are reported as `PP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use proxyprobe::correlation::{spearman_test, PValueMethod, PermutationOptions};
use proxyprobe::scoring::{fit_lp, fit_md, score_lp, score_md, LpHyper, LpModel, MdModel, Regularization};
use proxyprobe::{metrics, Error, Matrix};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Data = 4,
    Fit = 5,
    Numeric = 6,
    Metric = 7,
    Correlation = 8,
    Panic = 9,
    Other = 10,
}

/// How the p-value of a correlation was obtained.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpPValueMethod {
    Exact = 0,
    MonteCarlo = 1,
}

/// Spearman correlation with its two-sided permutation p-value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpCorrelation {
    pub rho: f64,
    pub p_value: f64,
    pub method: PpPValueMethod,
    /// Non-zero when either input contains ties.
    pub ties_present: u8,
}

/// Linear-probe hyperparameters. Obtain defaults from [`pp_lp_default_hyper`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpLpHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub classes: usize,
}

/// Opaque fitted linear probe.
pub struct PpLpModel(LpModel);

/// Opaque fitted Mahalanobis model.
pub struct PpMdModel(MdModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PpStatus {
    match err.root() {
        Error::DimensionMismatch { .. } => PpStatus::DimensionMismatch,
        Error::Data(_) | Error::Format(_) | Error::Schema(_) => PpStatus::Data,
        Error::Fit(_) | Error::Train { .. } => PpStatus::Fit,
        Error::Numeric(_) => PpStatus::Numeric,
        Error::Metric(_) => PpStatus::Metric,
        Error::Correlation(_) => PpStatus::Correlation,
        Error::Config(_) => PpStatus::InvalidArgument,
        _ => PpStatus::Other,
    }
}

struct Fail(PpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(PpStatus::NullPointer, format!("{name} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(PpStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            PpStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be NULL or point to `len` readable elements.
unsafe fn input<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be NULL or point to `len` writable elements.
unsafe fn output<'a, T>(ptr: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn matrix(ptr: *const f64, rows: usize, cols: usize, name: &str) -> Result<Matrix, Fail> {
    let len = rows.checked_mul(cols).ok_or_else(|| invalid(format!("{name}: size overflow")))?;
    let data = input(ptr, len, name)?;
    Ok(Matrix::from_vec(rows, cols, data.to_vec())?)
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

// ── diagnostics ───────────────────────────────────────────────────────

/// Message for the most recent failure on this thread, or NULL if none.
#[no_mangle]
pub extern "C" fn pp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Forgets the stored error message for this thread.
#[no_mangle]
pub extern "C" fn pp_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Static, NUL-terminated name of a status code; "unknown" for other values.
#[no_mangle]
pub extern "C" fn pp_status_name(status: i32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer",
        2 => c"invalid argument",
        3 => c"dimension mismatch",
        4 => c"data error",
        5 => c"fit error",
        6 => c"numeric error",
        7 => c"metric error",
        8 => c"correlation error",
        9 => c"panic",
        10 => c"error",
        _ => c"unknown",
    };
    s.as_ptr()
}

/// Library version, static and NUL-terminated.
#[no_mangle]
pub extern "C" fn pp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ── linear probe ──────────────────────────────────────────────────────

#[no_mangle]
pub extern "C" fn pp_lp_default_hyper() -> PpLpHyper {
    let h = LpHyper::default();
    PpLpHyper {
        lr: h.lr,
        epochs: h.epochs,
        l2: h.l2,
        classes: h.classes,
    }
}

/// Fits a softmax probe on `rows × cols` features with class labels in
/// `0..hyper.classes`. Class 1 is the anomaly class. `hyper` may be NULL for
/// the defaults.
///
/// # Safety
/// Pointers must reference arrays of the stated sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_lp_fit(
    features: *const f64,
    rows: usize,
    cols: usize,
    labels: *const u32,
    hyper: *const PpLpHyper,
    out: *mut *mut PpLpModel,
) -> PpStatus {
    guard(|| {
        let x = matrix(features, rows, cols, "features")?;
        let labels: Vec<usize> = input(labels, rows, "labels")?.iter().map(|&l| l as usize).collect();
        let h = if hyper.is_null() {
            LpHyper::default()
        } else {
            let h = &*hyper;
            LpHyper {
                lr: h.lr,
                epochs: h.epochs,
                l2: h.l2,
                classes: h.classes,
            }
        };
        let model = fit_lp(&x, &labels, &h)?;
        store(out, PpLpModel(model))
    })
}

/// Writes one anomaly-class probability per row into `scores`.
///
/// # Safety
/// `model` must come from [`pp_lp_fit`]; `scores` must hold `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn pp_lp_score(
    model: *const PpLpModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    scores: *mut f64,
) -> PpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let x = matrix(features, rows, cols, "features")?;
        let sv = score_lp(&model.0, &x)?;
        output(scores, rows, "scores")?.copy_from_slice(&sv.scores);
        Ok(())
    })
}

/// Feature dimension the probe was fit on, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or come from [`pp_lp_fit`].
#[no_mangle]
pub unsafe extern "C" fn pp_lp_dims(model: *const PpLpModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dims())
}

/// # Safety
/// `model` must be NULL or come from [`pp_lp_fit`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pp_lp_free(model: *mut PpLpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ── Mahalanobis ───────────────────────────────────────────────────────

/// Fits the normal-data Gaussian. `epsilon < 0` selects the automatic
/// regularization; otherwise `epsilon` is added to the covariance diagonal.
///
/// # Safety
/// `features` must hold `rows × cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_md_fit(
    features: *const f64,
    rows: usize,
    cols: usize,
    epsilon: f64,
    out: *mut *mut PpMdModel,
) -> PpStatus {
    guard(|| {
        let x = matrix(features, rows, cols, "features")?;
        let reg = if epsilon < 0.0 {
            Regularization::Auto
        } else if epsilon.is_finite() {
            Regularization::Fixed(epsilon)
        } else {
            return Err(invalid("epsilon must be finite"));
        };
        let model = fit_md(&x, reg)?;
        store(out, PpMdModel(model))
    })
}

/// Writes one squared Mahalanobis distance per row into `scores`.
///
/// # Safety
/// `model` must come from [`pp_md_fit`]; `scores` must hold `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn pp_md_score(
    model: *const PpMdModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    scores: *mut f64,
) -> PpStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let x = matrix(features, rows, cols, "features")?;
        let sv = score_md(&model.0, &x)?;
        output(scores, rows, "scores")?.copy_from_slice(&sv.scores);
        Ok(())
    })
}

/// Regularization actually applied during the fit, or NaN for NULL.
///
/// # Safety
/// `model` must be NULL or come from [`pp_md_fit`].
#[no_mangle]
pub unsafe extern "C" fn pp_md_epsilon(model: *const PpMdModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.reg_epsilon)
}

/// # Safety
/// `model` must be NULL or come from [`pp_md_fit`].
#[no_mangle]
pub unsafe extern "C" fn pp_md_dims(model: *const PpMdModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dims())
}

/// # Safety
/// `model` must be NULL or come from [`pp_md_fit`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pp_md_free(model: *mut PpMdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ── metrics ───────────────────────────────────────────────────────────

/// ROC-AUC in `[0, 1]` with ties counted as one half.
///
/// # Safety
/// Arrays must hold the stated counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_auc(
    scores_normal: *const f64,
    n_normal: usize,
    scores_anomaly: *const f64,
    n_anomaly: usize,
    out: *mut f64,
) -> PpStatus {
    guard(|| {
        let a = input(scores_normal, n_normal, "scores_normal")?;
        let b = input(scores_anomaly, n_anomaly, "scores_anomaly")?;
        let v = metrics::auc(a, b)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Scale-invariant signal-to-distortion ratio in dB.
///
/// # Safety
/// Both arrays must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_si_sdr(target: *const f64, estimate: *const f64, n: usize, out: *mut f64) -> PpStatus {
    guard(|| {
        let t = input(target, n, "target")?;
        let e = input(estimate, n, "estimate")?;
        let v = metrics::si_sdr(t, e)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// SI-SDR of `estimate` minus SI-SDR of `mixture`, both against `target`.
///
/// # Safety
/// All arrays must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_si_sdr_improvement(
    target: *const f64,
    estimate: *const f64,
    mixture: *const f64,
    n: usize,
    out: *mut f64,
) -> PpStatus {
    guard(|| {
        let t = input(target, n, "target")?;
        let e = input(estimate, n, "estimate")?;
        let m = input(mixture, n, "mixture")?;
        let v = metrics::si_sdr_improvement(t, e, m)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

// ── correlation ───────────────────────────────────────────────────────

/// Spearman ρ with a two-sided permutation p-value: exhaustive when
/// `n ≤ exact_limit`, otherwise `mc_draws` seeded random permutations.
///
/// # Safety
/// Both arrays must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_spearman(
    x: *const f64,
    y: *const f64,
    n: usize,
    exact_limit: usize,
    mc_draws: usize,
    seed: u64,
    out: *mut PpCorrelation,
) -> PpStatus {
    guard(|| {
        let xs = input(x, n, "x")?;
        let ys = input(y, n, "y")?;
        if exact_limit > 12 {
            return Err(invalid("exact_limit above 12 is not supported"));
        }
        if n > exact_limit && mc_draws == 0 {
            return Err(invalid("mc_draws must be positive"));
        }
        let opts = PermutationOptions {
            exact_limit,
            mc_draws,
            seed,
        };
        let r = spearman_test(xs, ys, &opts)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = PpCorrelation {
            rho: r.rho,
            p_value: r.p_two_sided,
            method: match r.method {
                PValueMethod::Exact => PpPValueMethod::Exact,
                PValueMethod::MonteCarlo => PpPValueMethod::MonteCarlo,
            },
            ties_present: r.ties_present as u8,
        };
        Ok(())
    })
}
