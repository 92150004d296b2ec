//! C ABI for the magflow toolkit.
//!
//! Objects cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible call returns a [`MagflowStatus`];
//! the message of the last failure on the calling thread is available from
//! [`magflow_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use magflow::cli::{self, Command, RunConfig};
use magflow::free_time::{self, FreeTimeConfig, LagCriticalPoint};
use magflow::{mane, DiscreteLoop, Error, HomotopyClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagflowStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid configuration, JSON or I/O; CLI exit code 2.
    Config = 2,
    /// Nonconvergence or collapse; CLI exit code 3.
    NoConvergence = 3,
    /// Any other numerical failure; CLI exit code 4.
    Failure = 4,
    InvalidUtf8 = 5,
    UnknownCommand = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed run configuration.
pub struct MagflowConfig {
    inner: RunConfig,
}

/// A closed orbit found by the free-time action search.
pub struct MagflowOrbit {
    inner: LagCriticalPoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MagflowStatus {
    match err.exit_code() {
        2 => MagflowStatus::Config,
        3 => MagflowStatus::NoConvergence,
        _ => MagflowStatus::Failure,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MagflowStatus, String)>) -> MagflowStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MagflowStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside magflow".into());
            MagflowStatus::Panic
        }
    }
}

fn lift(err: Error) -> (MagflowStatus, String) {
    (status_of(&err), err.to_string())
}

fn null() -> (MagflowStatus, String) {
    (MagflowStatus::NullPointer, "null pointer argument".into())
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, (MagflowStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| (MagflowStatus::InvalidUtf8, "string is not valid UTF-8".into()))
}

fn parse_command(name: &str) -> Option<Command> {
    Some(match name {
        "find-orbits" => Command::FindOrbits,
        "indices" => Command::Indices,
        "mane" => Command::Mane,
        "rf-flow" => Command::RfFlow,
        "morse-homology" => Command::MorseHomology,
        "leafwise" => Command::Leafwise,
        "verify" => Command::Verify,
        _ => return None,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn magflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next magflow call on the same thread.
#[no_mangle]
pub extern "C" fn magflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse a JSON run configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn magflow_config_from_json(json: *const c_char, out: *mut *mut MagflowConfig) -> MagflowStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let cfg = RunConfig::from_json(text(json)?).map_err(lift)?;
        *out = Box::into_raw(Box::new(MagflowConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`magflow_config_from_json`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn magflow_config_free(cfg: *mut MagflowConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn magflow_config_set_seed(cfg: *mut MagflowConfig, seed: u64) -> MagflowStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(null)?;
        c.inner.seed = seed;
        Ok(())
    })
}

/// Set the loop grid size; it must be even and at least 16.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn magflow_config_set_n(cfg: *mut MagflowConfig, n: usize) -> MagflowStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(null)?;
        magflow::loops::check_grid(n).map_err(lift)?;
        c.inner.n = n;
        Ok(())
    })
}

/// Run a CLI command without writing files. On success `*exit_code` holds the
/// command's exit code and `*report` a JSON report to release with
/// [`magflow_string_free`].
///
/// # Safety
/// `cfg` must be a live handle, `command` a NUL-terminated string and the
/// output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn magflow_run(
    cfg: *const MagflowConfig,
    command: *const c_char,
    exit_code: *mut i32,
    report: *mut *mut c_char,
) -> MagflowStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(null)?;
        if exit_code.is_null() || report.is_null() {
            return Err(null());
        }
        let name = text(command)?;
        let cmd = parse_command(name).ok_or_else(|| (MagflowStatus::UnknownCommand, format!("unknown command {name:?}")))?;
        let mut run_cfg = c.inner.clone();
        run_cfg.output = None;
        let out = cli::run(cmd, &run_cfg, None).map_err(lift)?;
        *exit_code = out.exit_code;
        *report = CString::new(out.report).map_err(|e| (MagflowStatus::Failure, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn magflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mane critical value bracket `[lower, upper]`; `upper` is `+inf` when the
/// magnetic form has no bounded primitive.
///
/// # Safety
/// `cfg` must be a live handle and the output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn magflow_mane_bracket(cfg: *const MagflowConfig, lower: *mut f64, upper: *mut f64) -> MagflowStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(null)?;
        if lower.is_null() || upper.is_null() {
            return Err(null());
        }
        let opts = mane::ManeOptions { seed: c.inner.seed, ..c.inner.mane.clone() };
        let est = mane::estimate(&c.inner.model, &opts);
        *lower = est.c_lower;
        *upper = est.c_upper;
        Ok(())
    })
}

/// Search for a closed orbit of winding `(m1, m2)` on the level `k` of the
/// configuration, starting from the straight loop through `(x0, y0)`.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn magflow_find_orbit(
    cfg: *const MagflowConfig,
    m1: i32,
    m2: i32,
    x0: f64,
    y0: f64,
    out: *mut *mut MagflowOrbit,
) -> MagflowStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let rc = &c.inner;
        let class = HomotopyClass::new(m1, m2);
        if class.is_trivial() {
            return Err((MagflowStatus::Config, "straight seeds need a nontrivial class".into()));
        }
        let ft = FreeTimeConfig::new(rc.model.clone(), rc.k, rc.n);
        let seed = DiscreteLoop::straight(rc.n, class, [x0, y0]).map_err(lift)?;
        let m = class.vector();
        let speed = (2.0 * (rc.k - rc.model.potential.value([x0, y0])).max(1e-3)).sqrt();
        let t0 = m[0].hypot(m[1]) / speed;
        let cp = free_time::find_critical(&ft, &seed, t0).map_err(lift)?;
        *out = Box::into_raw(Box::new(MagflowOrbit { inner: cp }));
        Ok(())
    })
}

/// # Safety
/// `orbit` must come from [`magflow_find_orbit`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn magflow_orbit_free(orbit: *mut MagflowOrbit) {
    if !orbit.is_null() {
        drop(Box::from_raw(orbit));
    }
}

/// Period `T`, or NaN for a null handle.
///
/// # Safety
/// `orbit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn magflow_orbit_period(orbit: *const MagflowOrbit) -> f64 {
    orbit.as_ref().map_or(f64::NAN, |o| o.inner.period)
}

/// Free-time action `S`, or NaN for a null handle.
///
/// # Safety
/// `orbit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn magflow_orbit_action(orbit: *const MagflowOrbit) -> f64 {
    orbit.as_ref().map_or(f64::NAN, |o| o.inner.action)
}

/// Morse index of the free-time action, or -1 for a null handle.
///
/// # Safety
/// `orbit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn magflow_orbit_index(orbit: *const MagflowOrbit) -> i32 {
    orbit.as_ref().map_or(-1, |o| o.inner.morse_index_free as i32)
}

/// Kernel dimension of the fixed-period Hessian, or -1 for a null handle.
///
/// # Safety
/// `orbit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn magflow_orbit_nullity(orbit: *const MagflowOrbit) -> i32 {
    orbit.as_ref().map_or(-1, |o| o.inner.nullity as i32)
}

/// Number of loop samples, or 0 for a null handle.
///
/// # Safety
/// `orbit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn magflow_orbit_len(orbit: *const MagflowOrbit) -> usize {
    orbit.as_ref().map_or(0, |o| o.inner.curve.len())
}

/// Copy the samples as `x0, y0, x1, y1, ...` into `buf`, which must hold
/// `2 * magflow_orbit_len(orbit)` doubles.
///
/// # Safety
/// `orbit` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn magflow_orbit_samples(orbit: *const MagflowOrbit, buf: *mut f64, len: usize) -> MagflowStatus {
    guard(|| {
        let o = orbit.as_ref().ok_or_else(null)?;
        if buf.is_null() {
            return Err(null());
        }
        let flat = o.inner.curve.to_flat();
        if len < flat.len() {
            return Err((MagflowStatus::BufferTooSmall, format!("need {} doubles, got {len}", flat.len())));
        }
        ptr::copy_nonoverlapping(flat.as_ptr(), buf, flat.len());
        Ok(())
    })
}
