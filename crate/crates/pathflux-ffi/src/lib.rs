//! C ABI for the pathflux library.
//!
//! Models travel as opaque handles; reports and datasets travel as
//! NUL-terminated JSON/CSV strings allocated by Rust and released with
//! [`pathflux_string_free`]. Every fallible call returns a status code
//! (see [`PathfluxStatus`]); on failure a thread-local message is
//! available through [`pathflux_last_error`]. No call panics across the
//! boundary.
//!
//! The header `include/pathflux.h` is generated with
//! `cbindgen --config cbindgen.toml --crate pathflux-ffi --output include/pathflux.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::c_char;

use pathflux::cli::{estimate_document, oracle_document, read_estimate_csv, FileConfig};
use pathflux::error::Error;
use pathflux::scm::DiscreteScm;
use pathflux::verify::{run_experiment, ExperimentSpec};

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathfluxStatus {
    /// Success.
    Ok = 0,
    /// Invalid input: model, dataset, configuration, or arguments.
    Validation = 2,
    /// Numerical guard: overlap or truncation-floor violation.
    NumericGuard = 3,
    /// A null pointer was passed where data was required.
    NullArgument = 4,
    /// Internal panic; the operation did not complete.
    Panic = 5,
}

/// Opaque model handle.
pub struct PathfluxScm {
    inner: DiscreteScm,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> PathfluxStatus {
    match err.exit_code() {
        3 => PathfluxStatus::NumericGuard,
        _ => PathfluxStatus::Validation,
    }
}

fn fail(err: &Error) -> PathfluxStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Run a fallible body with a panic shield.
fn guarded<F: FnOnce() -> PathfluxStatus>(body: F) -> PathfluxStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PathfluxStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn give_string(s: String, out: *mut *mut c_char) -> PathfluxStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            PathfluxStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte");
            PathfluxStatus::Validation
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pathflux_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string; never freed.
#[no_mangle]
pub extern "C" fn pathflux_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned by this library. A null pointer is a no-op.
///
/// # Safety
/// `s` must have been returned by a pathflux function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn pathflux_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and validate a model from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pathflux_scm_from_json(
    json: *const c_char,
    out: *mut *mut PathfluxScm,
) -> PathfluxStatus {
    if out.is_null() {
        return PathfluxStatus::NullArgument;
    }
    let Some(text) = read_str(json) else {
        set_error("json argument is null or not UTF-8");
        return PathfluxStatus::NullArgument;
    };
    guarded(|| match serde_json::from_str::<DiscreteScm>(text) {
        Ok(scm) => match scm.validate() {
            Ok(()) => {
                *out = Box::into_raw(Box::new(PathfluxScm { inner: scm }));
                PathfluxStatus::Ok
            }
            Err(e) => fail(&e),
        },
        Err(e) => fail(&Error::Json(e)),
    })
}

/// Fetch a built-in model (`"t0"` or `"t1"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pathflux_scm_builtin(
    name: *const c_char,
    out: *mut *mut PathfluxScm,
) -> PathfluxStatus {
    if out.is_null() {
        return PathfluxStatus::NullArgument;
    }
    let Some(name) = read_str(name) else {
        set_error("name argument is null or not UTF-8");
        return PathfluxStatus::NullArgument;
    };
    match pathflux::builtin::by_name(name) {
        Some(scm) => {
            *out = Box::into_raw(Box::new(PathfluxScm { inner: scm }));
            PathfluxStatus::Ok
        }
        None => {
            set_error(&format!("unknown builtin model {name:?}"));
            PathfluxStatus::Validation
        }
    }
}

/// Re-check every model invariant.
///
/// # Safety
/// `scm` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pathflux_scm_validate(scm: *const PathfluxScm) -> PathfluxStatus {
    let Some(scm) = scm.as_ref() else {
        return PathfluxStatus::NullArgument;
    };
    match scm.inner.validate() {
        Ok(()) => PathfluxStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Serialize the model back to its JSON document.
///
/// # Safety
/// `scm` must be a live handle; `out` must be valid. Free the result with
/// [`pathflux_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pathflux_scm_to_json(
    scm: *const PathfluxScm,
    out: *mut *mut c_char,
) -> PathfluxStatus {
    let (Some(scm), false) = (scm.as_ref(), out.is_null()) else {
        return PathfluxStatus::NullArgument;
    };
    guarded(|| match serde_json::to_string_pretty(&scm.inner) {
        Ok(s) => give_string(s, out),
        Err(e) => fail(&Error::Json(e)),
    })
}

/// Destroy a model handle. A null pointer is a no-op.
///
/// # Safety
/// `scm` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pathflux_scm_free(scm: *mut PathfluxScm) {
    if !scm.is_null() {
        drop(Box::from_raw(scm));
    }
}

/// Draw `n` i.i.d. rows and return them as CSV (`w,a,z,m,y` header).
/// Byte-identical for equal `(n, seed)`.
///
/// # Safety
/// `scm` must be a live handle; `out` must be valid. Free the result with
/// [`pathflux_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pathflux_simulate_csv(
    scm: *const PathfluxScm,
    n: u64,
    seed: u64,
    out: *mut *mut c_char,
) -> PathfluxStatus {
    let (Some(scm), false) = (scm.as_ref(), out.is_null()) else {
        return PathfluxStatus::NullArgument;
    };
    guarded(|| match scm.inner.sample(n as usize, seed) {
        Ok(data) => give_string(data.to_csv(), out),
        Err(e) => fail(&e),
    })
}

/// Exact decompositions of the model, as the `oracle` JSON document.
/// Set `include_ate` nonzero to add the treatment-effect decomposition
/// (binary exposure only).
///
/// # Safety
/// `scm` must be a live handle; `out` must be valid. Free the result with
/// [`pathflux_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pathflux_oracle_json(
    scm: *const PathfluxScm,
    include_ate: i32,
    out: *mut *mut c_char,
) -> PathfluxStatus {
    let (Some(scm), false) = (scm.as_ref(), out.is_null()) else {
        return PathfluxStatus::NullArgument;
    };
    guarded(
        || match oracle_document(&scm.inner, "handle", include_ate != 0) {
            Ok(doc) => give_string(doc.to_string(), out),
            Err(e) => fail(&e),
        },
    )
}

/// Cross-fitted estimation from a CSV dataset, as the `estimate` JSON
/// document. `config_json` takes the same keys as the CLI `--config` file
/// and may be null for defaults.
///
/// # Safety
/// `csv` must be NUL-terminated; `config_json` may be null; `out` must be
/// valid. Free the result with [`pathflux_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pathflux_estimate_json(
    csv: *const c_char,
    config_json: *const c_char,
    include_ate: i32,
    out: *mut *mut c_char,
) -> PathfluxStatus {
    if out.is_null() {
        return PathfluxStatus::NullArgument;
    }
    let Some(csv) = read_str(csv) else {
        set_error("csv argument is null or not UTF-8");
        return PathfluxStatus::NullArgument;
    };
    let cfg_text = if config_json.is_null() {
        None
    } else {
        match read_str(config_json) {
            Some(t) => Some(t),
            None => {
                set_error("config argument is not UTF-8");
                return PathfluxStatus::NullArgument;
            }
        }
    };
    guarded(|| {
        let file_cfg: FileConfig = match cfg_text {
            Some(t) => match serde_json::from_str(t) {
                Ok(c) => c,
                Err(e) => return fail(&Error::Json(e)),
            },
            None => FileConfig::default(),
        };
        let cfg = file_cfg.estimate_config(None);
        let (data, codebook) = match read_estimate_csv(csv, file_cfg.w_columns.as_deref()) {
            Ok(v) => v,
            Err(e) => return fail(&e),
        };
        match estimate_document(&data, &cfg, "buffer", codebook, include_ate != 0) {
            Ok(doc) => give_string(doc.to_string(), out),
            Err(e) => fail(&e),
        }
    })
}

/// Run a verification experiment from its spec JSON and return the report
/// JSON (the verdict is the `pass` field).
///
/// # Safety
/// `spec_json` must be NUL-terminated; `out` must be valid. Free the
/// result with [`pathflux_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pathflux_verify_json(
    spec_json: *const c_char,
    out: *mut *mut c_char,
) -> PathfluxStatus {
    if out.is_null() {
        return PathfluxStatus::NullArgument;
    }
    let Some(text) = read_str(spec_json) else {
        set_error("spec argument is null or not UTF-8");
        return PathfluxStatus::NullArgument;
    };
    guarded(|| {
        let spec: ExperimentSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(&Error::Json(e)),
        };
        match run_experiment(&spec) {
            Ok(rep) => match serde_json::to_string(&rep) {
                Ok(s) => give_string(s, out),
                Err(e) => fail(&Error::Json(e)),
            },
            Err(e) => fail(&e),
        }
    })
}
