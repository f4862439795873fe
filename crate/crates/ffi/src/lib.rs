//! C interface to `lpperm`.
//!
//! Objects are opaque heap handles created by `*_new`/`*_from_*` functions
//! and released with the matching `*_free`. Every fallible call returns an
//! [`LppermStatus`]; the message of the most recent failure on the calling
//! thread is available from [`lpperm_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use lpperm::bandwidth::{run_bi_lp, PatternMatrix};
use lpperm::birkhoff::project_birkhoff;
use lpperm::enhancements::{run_variant, EnhanceConfig, Variant};
use lpperm::error::Error;
use lpperm::instance::scale_instance;
use lpperm::io::parse_qaplib;
use lpperm::matrix::SquareMatrix;
use lpperm::solver::{SolveResult, SolverConfig};
use serde_json::Value;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LppermStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numerical = 4,
    /// The solve finished but the outer loop hit its iteration limit.
    NotConverged = 5,
    /// The requested value is not defined (for example a gap without a best known value).
    Unavailable = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LppermVariant {
    Lp = 0,
    LpCp = 1,
    LpNegprox = 2,
    LpCpNegprox = 3,
    L2 = 4,
}

impl From<LppermVariant> for Variant {
    fn from(v: LppermVariant) -> Self {
        match v {
            LppermVariant::Lp => Variant::Lp,
            LppermVariant::LpCp => Variant::LpCp,
            LppermVariant::LpNegprox => Variant::LpNegProx,
            LppermVariant::LpCpNegprox => Variant::LpCpNegProx,
            LppermVariant::L2 => Variant::L2,
        }
    }
}

/// A scaled QAP instance.
pub struct LppermInstance {
    inner: lpperm::instance::QapInstance,
}

/// Solver and enhancement parameters.
pub struct LppermConfig {
    solver: SolverConfig,
    enhance: EnhanceConfig,
}

/// Outcome of a solve.
pub struct LppermResult {
    inner: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> LppermStatus {
    match e {
        Error::TokenCount { .. }
        | Error::NonNumeric { .. }
        | Error::BadHeader { .. }
        | Error::IndexOutOfRange { .. }
        | Error::Parse { .. }
        | Error::Io(_) => LppermStatus::Parse,
        Error::IterationLimit { .. }
        | Error::GradientSingular
        | Error::NegativeBase { .. }
        | Error::EmptyIntersectionSuspected
        | Error::NonFinite { .. } => LppermStatus::Numerical,
        _ => LppermStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> LppermStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> LppermStatus {
    set_error(format!("{what} is null"));
    LppermStatus::NullPointer
}

/// Runs `f`, turning a panic into [`LppermStatus::Panic`].
fn guarded(f: impl FnOnce() -> LppermStatus) -> LppermStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            LppermStatus::Panic
        }
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lpperm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an instance from two row-major `n x n` matrices.
///
/// # Safety
/// `a` and `b` must point to `n * n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpperm_instance_new(
    n: usize,
    a: *const f64,
    b: *const f64,
    out: *mut *mut LppermInstance,
) -> LppermStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return null("argument");
        }
        let len = match n.checked_mul(n) {
            Some(l) if n > 0 => l,
            _ => {
                set_error("n must be positive");
                return LppermStatus::InvalidArgument;
            }
        };
        let a = slice::from_raw_parts(a, len).to_vec();
        let b = slice::from_raw_parts(b, len).to_vec();
        let built = SquareMatrix::from_vec(n, a)
            .and_then(|a| SquareMatrix::from_vec(n, b).map(|b| (a, b)))
            .and_then(|(a, b)| scale_instance(&a, &b));
        match built {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(LppermInstance { inner: inst }));
                LppermStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses QAPLIB text (`n`, then `A`, then `B`).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpperm_instance_from_qaplib(text: *const c_char, out: *mut *mut LppermInstance) -> LppermStatus {
    guarded(|| {
        if text.is_null() || out.is_null() {
            return null("argument");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            set_error("text is not valid UTF-8");
            return LppermStatus::Parse;
        };
        match parse_qaplib(text).and_then(|(a, b)| scale_instance(&a, &b)) {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(LppermInstance { inner: inst }));
                LppermStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Sets the best known objective used for gap reporting.
///
/// # Safety
/// `inst` must come from an `lpperm_instance_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn lpperm_instance_set_best_known(inst: *mut LppermInstance, obj_best: f64) -> LppermStatus {
    guarded(|| {
        let Some(inst) = inst.as_mut() else { return null("instance") };
        if !(obj_best > 0.0 && obj_best.is_finite()) {
            return fail(Error::NonPositiveReference(obj_best));
        }
        inst.inner.obj_best = Some(obj_best);
        LppermStatus::Ok
    })
}

/// # Safety
/// `inst` must be null or come from an `lpperm_instance_*` constructor, and
/// must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lpperm_instance_free(inst: *mut LppermInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Default parameters.
#[no_mangle]
pub extern "C" fn lpperm_config_new() -> *mut LppermConfig {
    Box::into_raw(Box::new(LppermConfig { solver: SolverConfig::default(), enhance: EnhanceConfig::default() }))
}

/// Sets one parameter by its field name (`p`, `eps0`, `max_inner`, `seed`,
/// `timing`, `k_max`, `mu0`, `c1`, `omega`, ...). Counts must be
/// non-negative integers; booleans take 0 or 1.
///
/// # Safety
/// `cfg` must come from [`lpperm_config_new`]; `key` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lpperm_config_set(cfg: *mut LppermConfig, key: *const c_char, value: f64) -> LppermStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else { return null("config") };
        if key.is_null() {
            return null("key");
        }
        let Ok(key) = CStr::from_ptr(key).to_str() else {
            set_error("key is not valid UTF-8");
            return LppermStatus::InvalidArgument;
        };
        let res = if matches!(key, "k_max" | "mu0" | "c1" | "omega") {
            set_field(&cfg.enhance, key, value).map(|e| cfg.enhance = e)
        } else {
            set_field(&cfg.solver, key, value).map(|s| cfg.solver = s)
        };
        match res {
            Ok(()) => LppermStatus::Ok,
            Err(msg) => {
                set_error(msg);
                LppermStatus::InvalidArgument
            }
        }
    })
}

fn set_field<T>(target: &T, key: &str, value: f64) -> Result<T, String>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut obj = serde_json::to_value(target).map_err(|e| e.to_string())?;
    let slot = obj
        .as_object_mut()
        .and_then(|m| m.get_mut(key))
        .ok_or_else(|| format!("unknown parameter {key:?}"))?;
    *slot = match slot {
        Value::Bool(_) if value == 0.0 || value == 1.0 => Value::Bool(value == 1.0),
        Value::Number(n) if n.is_u64() => {
            if value < 0.0 || value.fract() != 0.0 || value > u64::MAX as f64 {
                return Err(format!("{key} needs a non-negative integer, got {value}"));
            }
            Value::from(value as u64)
        }
        Value::Number(_) | Value::Null => {
            serde_json::Number::from_f64(value).map(Value::Number).ok_or_else(|| format!("{key} must be finite"))?
        }
        _ => return Err(format!("parameter {key:?} cannot be set from a number")),
    };
    serde_json::from_value(obj).map_err(|e| e.to_string())
}

/// # Safety
/// `cfg` must be null or come from [`lpperm_config_new`], and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lpperm_config_free(cfg: *mut LppermConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Solves `inst` with the given variant. On [`LppermStatus::Ok`] and
/// [`LppermStatus::NotConverged`] a result is stored in `out`.
///
/// # Safety
/// `inst` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpperm_solve(
    inst: *const LppermInstance,
    cfg: *const LppermConfig,
    variant: LppermVariant,
    out: *mut *mut LppermResult,
) -> LppermStatus {
    guarded(|| {
        let (Some(inst), Some(cfg)) = (inst.as_ref(), cfg.as_ref()) else { return null("argument") };
        if out.is_null() {
            return null("out");
        }
        match run_variant(&inst.inner, &cfg.solver, &cfg.enhance, variant.into()) {
            Ok(r) => {
                let converged = r.converged();
                *out = Box::into_raw(Box::new(LppermResult { inner: r }));
                if converged {
                    LppermStatus::Ok
                } else {
                    set_error("outer iteration limit reached");
                    LppermStatus::NotConverged
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// Objective of the best permutation, in the instance's original units.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn lpperm_result_objective(res: *const LppermResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.inner.f_best)
}

/// Percentage gap to the best known value.
///
/// # Safety
/// `res` must be a live result handle; `gap` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpperm_result_gap(res: *const LppermResult, gap: *mut f64) -> LppermStatus {
    let Some(r) = res.as_ref() else { return null("result") };
    if gap.is_null() {
        return null("gap");
    }
    match r.inner.gap_percent {
        Some(g) => {
            *gap = g;
            LppermStatus::Ok
        }
        None => {
            set_error("no best known value");
            LppermStatus::Unavailable
        }
    }
}

/// Number of objective evaluations.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn lpperm_result_nfe(res: *const LppermResult) -> usize {
    res.as_ref().map_or(0, |r| r.inner.nfe)
}

/// Copies the 0-based best permutation (`perm[j]` is the row of the one in
/// column `j`) into `perm`, which holds `len` entries; `len` must equal `n`.
///
/// # Safety
/// `res` must be a live result handle; `perm` must hold `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn lpperm_result_permutation(res: *const LppermResult, perm: *mut usize, len: usize) -> LppermStatus {
    let Some(r) = res.as_ref() else { return null("result") };
    if perm.is_null() {
        return null("perm");
    }
    let p = r.inner.x_best.as_slice();
    if len != p.len() {
        set_error(format!("buffer holds {len} entries, permutation has {}", p.len()));
        return LppermStatus::InvalidArgument;
    }
    slice::from_raw_parts_mut(perm, len).copy_from_slice(p);
    LppermStatus::Ok
}

/// # Safety
/// `res` must be null or a live result handle, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lpperm_result_free(res: *mut LppermResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Euclidean projection of the row-major `n x n` matrix `c` onto the doubly
/// stochastic matrices, written to `out`.
///
/// # Safety
/// `c` must hold `n * n` readable doubles and `out` `n * n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn lpperm_project(n: usize, c: *const f64, tol: f64, out: *mut f64) -> LppermStatus {
    guarded(|| {
        if c.is_null() || out.is_null() {
            return null("argument");
        }
        let Some(len) = n.checked_mul(n).filter(|_| n > 0) else {
            set_error("n must be positive");
            return LppermStatus::InvalidArgument;
        };
        let c = match SquareMatrix::from_vec(n, slice::from_raw_parts(c, len).to_vec()) {
            Ok(m) => m,
            Err(e) => return fail(e),
        };
        match project_birkhoff(&c, tol) {
            Ok(p) => {
                slice::from_raw_parts_mut(out, len).copy_from_slice(p.point.matrix().as_slice());
                if p.converged {
                    LppermStatus::Ok
                } else {
                    set_error("projection did not reach the tolerance");
                    LppermStatus::NotConverged
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// Bandwidth minimization of the undirected graph with `n_edges` 0-based
/// edges `(rows[e], cols[e])`. Writes the bandwidth to `bw` and the ordering
/// to `perm` (`n` entries): `perm[k]` is the 0-based vertex placed at position `k`.
///
/// # Safety
/// `rows`/`cols` must hold `n_edges` entries, `perm` `n` writable entries;
/// `cfg` must be a live config handle and `bw` writable.
#[no_mangle]
pub unsafe extern "C" fn lpperm_bandwidth(
    n: usize,
    n_edges: usize,
    rows: *const usize,
    cols: *const usize,
    cfg: *const LppermConfig,
    variant: LppermVariant,
    bw: *mut usize,
    perm: *mut usize,
) -> LppermStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else { return null("config") };
        if bw.is_null() || perm.is_null() || (n_edges > 0 && (rows.is_null() || cols.is_null())) {
            return null("argument");
        }
        let edges: Vec<(usize, usize)> = if n_edges == 0 {
            Vec::new()
        } else {
            let r = slice::from_raw_parts(rows, n_edges);
            let c = slice::from_raw_parts(cols, n_edges);
            r.iter().copied().zip(c.iter().copied()).collect()
        };
        let pattern = match PatternMatrix::new(n, edges) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match run_bi_lp(&pattern, &cfg.solver, &cfg.enhance, variant.into()) {
            Ok(res) => {
                *bw = res.bw;
                slice::from_raw_parts_mut(perm, n).copy_from_slice(res.perm.as_slice());
                LppermStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
