//! C ABI over the queuelab core.
//!
//! Every fallible function returns a [`QlStatus`]; on failure the message is
//! kept per thread and read with [`ql_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function. Strings handed
//! out by the library are released with [`ql_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use queuelab::config::parse_config_at;
use queuelab::ggm::{kw_step_in_place, moment_condition_check, MomentVerdict};
use queuelab::stochastic::{DistributionSpec, RngStream};
use queuelab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Utf8 = 3,
    Parse = 4,
    Config = 5,
    Io = 6,
    Replication = 7,
    Manifest = 8,
    Degenerate = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlMomentVerdict {
    Finite = 0,
    Infinite = 1,
    IntegerRhoOpen = 2,
    Unknown = 3,
}

/// Random stream handle.
pub struct QlRng(RngStream);

/// Distribution handle.
pub struct QlDistribution(DistributionSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> QlStatus {
    match err {
        Error::InvalidParameter { .. } => QlStatus::InvalidArgument,
        Error::DistributionSyntax { .. } => QlStatus::Parse,
        Error::Degenerate(_) => QlStatus::Degenerate,
        Error::Config(_) => QlStatus::Config,
        Error::Replication(_) => QlStatus::Replication,
        Error::Manifest(_) => QlStatus::Manifest,
        Error::Io(_) | Error::Json(_) => QlStatus::Io,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (QlStatus, String)>) -> QlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QlStatus::Panic
        }
    }
}

fn core(err: Error) -> (QlStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (QlStatus, String) {
    (QlStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (QlStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (QlStatus::Utf8, format!("{name}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (QlStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ql_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ql_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ql_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New stream `stream_id` under `seed`; never null.
#[no_mangle]
pub extern "C" fn ql_rng_new(seed: u64, stream_id: u64) -> *mut QlRng {
    Box::into_raw(Box::new(QlRng(RngStream::new(seed, stream_id))))
}

/// # Safety
/// `rng` must come from [`ql_rng_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ql_rng_free(rng: *mut QlRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Uniform draw on `[0, 1)`.
///
/// # Safety
/// `rng` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_rng_uniform(rng: *mut QlRng, out: *mut f64) -> QlStatus {
    guard(|| {
        let rng = out_arg(rng, "rng")?;
        *out_arg(out, "out")? = rng.0.uniform();
        Ok(())
    })
}

/// Parses `exp(1.0)`, `pareto(2.5,1)` and the other canonical forms.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_distribution_parse(text: *const c_char, out: *mut *mut QlDistribution) -> QlStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let spec: DistributionSpec = text.parse().map_err(core)?;
        *out = Box::into_raw(Box::new(QlDistribution(spec)));
        Ok(())
    })
}

/// # Safety
/// `d` must come from [`ql_distribution_parse`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ql_distribution_free(d: *mut QlDistribution) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_distribution_mean(d: *const QlDistribution, out: *mut f64) -> QlStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("distribution"))?;
        *out_arg(out, "out")? = d.0.mean();
        Ok(())
    })
}

/// `P(X > x)`.
///
/// # Safety
/// `d` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_distribution_tail(d: *const QlDistribution, x: f64, out: *mut f64) -> QlStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("distribution"))?;
        *out_arg(out, "out")? = d.0.tail(x);
        Ok(())
    })
}

/// # Safety
/// `d` and `rng` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_distribution_sample(d: *const QlDistribution, rng: *mut QlRng, out: *mut f64) -> QlStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("distribution"))?;
        let rng = out_arg(rng, "rng")?;
        *out_arg(out, "out")? = d.0.sample(&mut rng.0);
        Ok(())
    })
}

/// `max(w + sigma - t, 0)`.
#[no_mangle]
pub extern "C" fn ql_lindley_step(w: f64, sigma: f64, t: f64) -> f64 {
    queuelab::gg1::lindley_step(w, sigma, t)
}

/// One multi-server workload step on the sorted vector `w[0..m]`, in place.
///
/// # Safety
/// `w` must point to `m` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ql_kw_step(w: *mut f64, m: usize, sigma: f64, t: f64) -> QlStatus {
    guard(|| {
        if w.is_null() {
            return Err(null("w"));
        }
        if m == 0 {
            return Err((QlStatus::InvalidArgument, "m must be ≥ 1".into()));
        }
        let w = std::slice::from_raw_parts_mut(w, m);
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.windows(2).any(|p| p[0] > p[1]) {
            return Err((
                QlStatus::InvalidArgument,
                "w must be sorted, finite and non-negative".into(),
            ));
        }
        if !(sigma.is_finite() && sigma >= 0.0 && t.is_finite() && t >= 0.0) {
            return Err((
                QlStatus::InvalidArgument,
                "sigma and t must be finite and non-negative".into(),
            ));
        }
        kw_step_in_place(w, sigma, t);
        Ok(())
    })
}

/// Whether `E D^gamma` is finite for the `m`-server queue with load `rho`.
///
/// # Safety
/// `service` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_moment_check(
    service: *const QlDistribution,
    rho: f64,
    m: usize,
    gamma: f64,
    out: *mut QlMomentVerdict,
) -> QlStatus {
    guard(|| {
        let service = service.as_ref().ok_or_else(|| null("service"))?;
        let out = out_arg(out, "out")?;
        *out = match moment_condition_check(&service.0, rho, m, gamma).map_err(core)? {
            MomentVerdict::Finite => QlMomentVerdict::Finite,
            MomentVerdict::Infinite => QlMomentVerdict::Infinite,
            MomentVerdict::IntegerRhoOpen => QlMomentVerdict::IntegerRhoOpen,
            MomentVerdict::Unknown => QlMomentVerdict::Unknown,
        };
        Ok(())
    })
}

/// Validates config text; relative file references resolve against `base_dir`
/// (null means the current directory). All problems end up in the error message.
///
/// # Safety
/// `text` must be NUL-terminated; `base_dir` NUL-terminated or null.
#[no_mangle]
pub unsafe extern "C" fn ql_config_validate(text: *const c_char, base_dir: *const c_char) -> QlStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let base = if base_dir.is_null() {
            "."
        } else {
            str_arg(base_dir, "base_dir")?
        };
        parse_config_at(text, Path::new(base)).map_err(core)?;
        Ok(())
    })
}

/// Runs a config and writes its CSV and manifest into `out_dir`. On success
/// `manifest_json` (if not null) receives the manifest, to be released with
/// [`ql_string_free`].
///
/// # Safety
/// `text` and `out_dir` must be NUL-terminated; `base_dir` NUL-terminated or
/// null; `manifest_json` writable or null.
#[no_mangle]
pub unsafe extern "C" fn ql_run_config(
    text: *const c_char,
    base_dir: *const c_char,
    out_dir: *const c_char,
    manifest_json: *mut *mut c_char,
) -> QlStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let base = if base_dir.is_null() {
            "."
        } else {
            str_arg(base_dir, "base_dir")?
        };
        let out_dir = str_arg(out_dir, "out_dir")?;
        let cfg = parse_config_at(text, Path::new(base)).map_err(core)?;
        let manifest = queuelab::runner::run(&cfg, Path::new(out_dir)).map_err(core)?;
        if let Some(slot) = manifest_json.as_mut() {
            let json = serde_json::to_string(&manifest).map_err(|e| core(e.into()))?;
            *slot = CString::new(json)
                .map_err(|e| (QlStatus::Io, e.to_string()))?
                .into_raw();
        }
        Ok(())
    })
}

/// Recomputes the output digests listed in a manifest file.
///
/// # Safety
/// `manifest_path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ql_verify_manifest(manifest_path: *const c_char) -> QlStatus {
    guard(|| {
        let path = str_arg(manifest_path, "manifest_path")?;
        queuelab::runner::verify(Path::new(path)).map_err(core)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_maps_panics_and_clears_errors() {
        assert_eq!(guard(|| panic!("boom")), QlStatus::Panic);
        let msg = unsafe { CStr::from_ptr(ql_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
        assert_eq!(guard(|| Ok(())), QlStatus::Ok);
        assert!(ql_last_error_message().is_null());
    }
}
