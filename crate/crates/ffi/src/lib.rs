//! C ABI for the `dualdiv` solver.
//!
//! Objects are opaque handles created by `*_new`/`*_solve` functions and
//! released by the matching `*_free`. Every fallible function returns a
//! [`DdStatus`] and writes its result through an out-pointer; on failure
//! `dd_last_error_message` describes the error on the calling thread.
//! Strings returned by the library must be released with `dd_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dualdiv::hjb::{default_span, linear_grid, verify_barrier, verify_threshold};
use dualdiv::{
    solve_barrier, solve_threshold, validate, BarrierSolution, DiscountSpec, DualModelParams,
    Error, ErrorClass, Estimator, Regime, SimConfig, Solution, Strategy, ThresholdSolution,
    ValidatedModel,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Degenerate = 3,
    VerificationFailed = 4,
    Internal = 5,
    InvalidUtf8 = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdRegime {
    AlwaysMax = 0,
    Threshold = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdStrategyKind {
    None = 0,
    Const = 1,
    Threshold = 2,
    Barrier = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdEstimator {
    Collapsed = 0,
    Raw = 1,
}

/// Dividend strategy; `level` and `rate` are ignored where they do not apply.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DdStrategy {
    pub kind: DdStrategyKind,
    pub level: f64,
    pub rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DdEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub n_paths: u64,
    pub ruin_fraction: f64,
}

/// A validated model.
pub struct DdModel(ValidatedModel);

/// Optimal restricted (rate-capped) solution.
pub struct DdThreshold {
    sol: ThresholdSolution,
    r: f64,
}

/// Optimal unrestricted solution.
pub struct DdBarrier {
    sol: BarrierSolution,
    r: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> DdStatus {
    match err {
        Error::ExponentAtOrAboveBeta { .. } | Error::Io(_) => DdStatus::Internal,
        e => match e.class() {
            ErrorClass::Degenerate => DdStatus::Degenerate,
            ErrorClass::Validation => DdStatus::Validation,
            ErrorClass::Internal => DdStatus::Internal,
        },
    }
}

enum Fail {
    Null(&'static str),
    Utf8,
    Lib(Error),
    Verify(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> DdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DdStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("NullPointer: `{what}` is null"));
            DdStatus::NullPointer
        }
        Ok(Err(Fail::Utf8)) => {
            set_error("InvalidUtf8: input is not valid UTF-8".into());
            DdStatus::InvalidUtf8
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(format!("{}: {}", e.name(), e));
            status_of(&e)
        }
        Ok(Err(Fail::Verify(msg))) => {
            set_error(format!("VerificationFailed: {msg}"));
            DdStatus::VerificationFailed
        }
        Err(_) => {
            set_error("Internal: panic inside dualdiv".into());
            DdStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn write<T>(out: *mut T, what: &'static str, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_str<'a>(s: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail::Utf8)
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON has no nul bytes").into_raw()
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Model

/// Build a model with geometric Brownian discounting.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_model_new_gbm(
    c: f64,
    lambda: f64,
    beta: f64,
    r: f64,
    m: f64,
    delta: f64,
    out: *mut *mut DdModel,
) -> DdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let model = validate(
            DualModelParams::new(c, lambda, beta),
            DiscountSpec::gbm(r, m, delta),
        )?;
        write(out, "out", Box::into_raw(Box::new(DdModel(model))))
    })
}

/// Build a model from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_model_from_json(
    json: *const c_char,
    out: *mut *mut DdModel,
) -> DdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let model = ValidatedModel::from_json_str(read_str(json, "json")?)?;
        write(out, "out", Box::into_raw(Box::new(DdModel(model))))
    })
}

/// Effective discount rate `theta`.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_model_theta(model: *const DdModel, out: *mut f64) -> DdStatus {
    guard(|| write(out, "out", deref(model, "model")?.0.theta()))
}

/// # Safety
/// `model` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dd_model_free(model: *mut DdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// Threshold

/// Solve the rate-capped problem with cap `xi`.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_threshold_solve(
    model: *const DdModel,
    xi: f64,
    out: *mut *mut DdThreshold,
) -> DdStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let sol = solve_threshold(m, xi)?;
        write(
            out,
            "out",
            Box::into_raw(Box::new(DdThreshold { sol, r: m.r() })),
        )
    })
}

/// Switching level (0 in the always-max regime).
///
/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_threshold_level(sol: *const DdThreshold, out: *mut f64) -> DdStatus {
    guard(|| write(out, "out", deref(sol, "sol")?.sol.xhat))
}

/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_threshold_regime(
    sol: *const DdThreshold,
    out: *mut DdRegime,
) -> DdStatus {
    guard(|| {
        let regime = match deref(sol, "sol")?.sol.regime {
            Regime::AlwaysMax => DdRegime::AlwaysMax,
            Regime::Threshold => DdRegime::Threshold,
        };
        write(out, "out", regime)
    })
}

/// Value `e^{-r} F(x)` at surplus `x`.
///
/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_threshold_value(
    sol: *const DdThreshold,
    x: f64,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        let h = deref(sol, "sol")?;
        write(out, "out", (-h.r).exp() * h.sol.f(x))
    })
}

/// Solution as JSON; release with `dd_string_free`.
///
/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_threshold_to_json(
    sol: *const DdThreshold,
    out: *mut *mut c_char,
) -> DdStatus {
    guard(|| {
        let json = Solution::Threshold(deref(sol, "sol")?.sol).to_json_string();
        write(out, "out", to_c_string(json))
    })
}

/// Check the HJB equation at `n_points` evenly spaced points on
/// `[0, 3 * level]` with tolerance `rel_tol` relative to `xi / theta`.
/// Returns `DD_STATUS_VERIFICATION_FAILED` if any point fails; the largest
/// residual is written to `max_abs` either way.
///
/// # Safety
/// Handles must be live; `max_abs` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_threshold_verify(
    sol: *const DdThreshold,
    model: *const DdModel,
    n_points: usize,
    rel_tol: f64,
    max_abs: *mut f64,
) -> DdStatus {
    guard(|| {
        let s = deref(sol, "sol")?.sol;
        let m = &deref(model, "model")?.0;
        if max_abs.is_null() {
            return Err(Fail::Null("max_abs"));
        }
        let grid = linear_grid(default_span(&Solution::Threshold(s)), n_points);
        let report = verify_threshold(&s, m, &grid, rel_tol)?;
        write(max_abs, "max_abs", report.max_abs)?;
        verdict(report.pass, report.max_abs, report.tol)
    })
}

fn verdict(pass: bool, max_abs: f64, tol: f64) -> Result<(), Fail> {
    if pass {
        Ok(())
    } else {
        Err(Fail::Verify(format!(
            "max residual {max_abs:e} exceeds {tol:e}"
        )))
    }
}

/// # Safety
/// `sol` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dd_threshold_free(sol: *mut DdThreshold) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

// ---------------------------------------------------------------------------
// Barrier

/// Solve the unrestricted problem.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_barrier_solve(
    model: *const DdModel,
    out: *mut *mut DdBarrier,
) -> DdStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let sol = solve_barrier(m)?;
        write(
            out,
            "out",
            Box::into_raw(Box::new(DdBarrier { sol, r: m.r() })),
        )
    })
}

/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_barrier_level(sol: *const DdBarrier, out: *mut f64) -> DdStatus {
    guard(|| write(out, "out", deref(sol, "sol")?.sol.b))
}

/// Value `e^{-r} F(x)` at surplus `x`.
///
/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_barrier_value(
    sol: *const DdBarrier,
    x: f64,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        let h = deref(sol, "sol")?;
        write(out, "out", (-h.r).exp() * h.sol.f(x))
    })
}

/// # Safety
/// `sol` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_barrier_to_json(
    sol: *const DdBarrier,
    out: *mut *mut c_char,
) -> DdStatus {
    guard(|| {
        let json = Solution::Barrier(deref(sol, "sol")?.sol).to_json_string();
        write(out, "out", to_c_string(json))
    })
}

/// As `dd_threshold_verify`, with tolerance relative to `F(b)`.
///
/// # Safety
/// Handles must be live; `max_abs` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_barrier_verify(
    sol: *const DdBarrier,
    model: *const DdModel,
    n_points: usize,
    rel_tol: f64,
    max_abs: *mut f64,
) -> DdStatus {
    guard(|| {
        let s = deref(sol, "sol")?.sol;
        let m = &deref(model, "model")?.0;
        if max_abs.is_null() {
            return Err(Fail::Null("max_abs"));
        }
        let grid = linear_grid(default_span(&Solution::Barrier(s)), n_points);
        let report = verify_barrier(&s, m, &grid, rel_tol)?;
        write(max_abs, "max_abs", report.max_abs)?;
        verdict(report.pass, report.max_abs, report.tol)
    })
}

/// # Safety
/// `sol` must be NULL or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dd_barrier_free(sol: *mut DdBarrier) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

// ---------------------------------------------------------------------------
// Simulation

/// Monte Carlo estimate of `strategy`'s value from surplus `x`.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_simulate(
    model: *const DdModel,
    strategy: DdStrategy,
    x: f64,
    n_paths: u64,
    seed: u64,
    estimator: DdEstimator,
    out: *mut DdEstimate,
) -> DdStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let strategy = match strategy.kind {
            DdStrategyKind::None => Strategy::NoDividend,
            DdStrategyKind::Const => Strategy::ConstRate {
                rate: strategy.rate,
            },
            DdStrategyKind::Threshold => Strategy::Threshold {
                level: strategy.level,
                rate: strategy.rate,
            },
            DdStrategyKind::Barrier => Strategy::Barrier {
                level: strategy.level,
            },
        };
        let estimator = match estimator {
            DdEstimator::Collapsed => Estimator::Collapsed,
            DdEstimator::Raw => Estimator::Raw,
        };
        let n = usize::try_from(n_paths)
            .map_err(|_| Error::InvalidConfig("n_paths too large".into()))?;
        let cfg = SimConfig::new(n, seed).with_estimator(estimator);
        let est = dualdiv::estimate_value(m, &strategy, x, &cfg)?;
        write(
            out,
            "out",
            DdEstimate {
                mean: est.mean,
                std_err: est.std_err,
                ci95_low: est.ci95.0,
                ci95_high: est.ci95.1,
                n_paths: est.n_paths as u64,
                ruin_fraction: est.ruin_fraction,
            },
        )
    })
}
