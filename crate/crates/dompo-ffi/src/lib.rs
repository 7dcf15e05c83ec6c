// Copyright 2026 Dompo Contributors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over the point evaluator. Handles are opaque heap boxes owned by
//! the caller until passed to the matching `_free`. Every fallible call
//! returns a `DOMPO_*` code and leaves a message for `dompo_last_error`.
//! The declarations live in `include/dompo.h`, kept in step by hand.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_int, size_t};

use dompo::params::RawParams;
use dompo::sweep::{self, Backend, PointOptions, PointResult, Status};
use dompo::{Error, SystemParams};

pub const DOMPO_OK: c_int = 0;
pub const DOMPO_ERR_NULL: c_int = 1;
pub const DOMPO_ERR_UTF8: c_int = 2;
pub const DOMPO_ERR_PARAMS: c_int = 3;
pub const DOMPO_ERR_KEY: c_int = 4;
pub const DOMPO_ERR_UNAVAILABLE: c_int = 5;
pub const DOMPO_ERR_BACKEND: c_int = 6;
pub const DOMPO_ERR_PANIC: c_int = 7;

pub const DOMPO_BACKEND_SEMICLASSICAL: c_int = 0;
pub const DOMPO_BACKEND_CMOP: c_int = 1;
pub const DOMPO_BACKEND_ORACLE: c_int = 2;

pub const DOMPO_STATUS_OK: c_int = 0;
pub const DOMPO_STATUS_AT_THRESHOLD: c_int = 1;
pub const DOMPO_STATUS_NOT_CONVERGED: c_int = 2;
pub const DOMPO_STATUS_UNSTABLE_MECHANICS: c_int = 3;

pub struct DompoParams(SystemParams);
pub struct DompoPoint {
    result: PointResult,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    // interior NULs cannot cross the boundary
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(c_int, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnknownParameter(_) => DOMPO_ERR_KEY,
            _ => DOMPO_ERR_PARAMS,
        };
        Fail(code, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> c_int {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DOMPO_OK
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            DOMPO_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(DOMPO_ERR_NULL, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(DOMPO_ERR_UTF8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(DOMPO_ERR_NULL, format!("{what} is null")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(DOMPO_ERR_NULL, "out is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dompo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn dompo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses `key = value` text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dompo_params_parse(text: *const c_char, out: *mut *mut DompoParams) -> c_int {
    guard(|| {
        let p = RawParams::parse(str_arg(text, "text")?)?.validate()?;
        emit(out, DompoParams(p))
    })
}

/// Headline family at detuning `delta` and threshold fraction `x`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dompo_params_headline(delta: f64, x: f64, out: *mut *mut DompoParams) -> c_int {
    guard(|| emit(out, DompoParams(SystemParams::headline(delta, x)?)))
}

/// Replaces one field in place; the handle is untouched on failure.
///
/// # Safety
/// `p` must come from this library and not be freed; `key` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dompo_params_set(p: *mut DompoParams, key: *const c_char, value: f64) -> c_int {
    guard(|| {
        let key = str_arg(key, "key")?;
        let h = p.as_mut().ok_or_else(|| Fail(DOMPO_ERR_NULL, "params is null".into()))?;
        h.0 = h.0.with(key, value)?;
        Ok(())
    })
}

/// # Safety
/// `p` must come from this library; `key` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dompo_params_get(p: *const DompoParams, key: *const c_char, out: *mut f64) -> c_int {
    guard(|| {
        let v = handle(p, "params")?.0.get(str_arg(key, "key")?)?;
        write_f64(out, v)
    })
}

/// # Safety
/// `p` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dompo_params_free(p: *mut DompoParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn write_f64(out: *mut f64, v: f64) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(DOMPO_ERR_NULL, "out is null".into()));
    }
    *out = v;
    Ok(())
}

/// Evaluates one point with default backend options. Physics failures
/// (threshold, unconverged solve) still produce a point; inspect its status.
///
/// # Safety
/// `p` must come from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dompo_evaluate(p: *const DompoParams, backend: c_int, out: *mut *mut DompoPoint) -> c_int {
    guard(|| {
        let p = &handle(p, "params")?.0;
        let backend = match backend {
            DOMPO_BACKEND_SEMICLASSICAL => Backend::Semiclassical,
            DOMPO_BACKEND_CMOP => Backend::Cmop,
            DOMPO_BACKEND_ORACLE => Backend::Oracle,
            other => return Err(Fail(DOMPO_ERR_BACKEND, format!("unknown backend code {other}"))),
        };
        let result = sweep::evaluate_point(p, backend, &PointOptions::default());
        let json = serde_json::to_string(&result).map_err(|e| Fail(DOMPO_ERR_PANIC, e.to_string()))?;
        let json = CString::new(json).expect("JSON has no NULs");
        emit(out, DompoPoint { result, json })
    })
}

/// Status code of the point; `-1` for a null handle.
///
/// # Safety
/// `pt` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn dompo_point_status(pt: *const DompoPoint) -> c_int {
    match pt.as_ref().map(|h| h.result.status) {
        None => -1,
        Some(Status::Ok) => DOMPO_STATUS_OK,
        Some(Status::AtThresholdDivergent) => DOMPO_STATUS_AT_THRESHOLD,
        Some(Status::NotConverged) => DOMPO_STATUS_NOT_CONVERGED,
        Some(Status::UnstableMechanics) => DOMPO_STATUS_UNSTABLE_MECHANICS,
    }
}

fn point_field(r: &PointResult, key: &str) -> Result<Option<f64>, Fail> {
    let rates = r.rates.as_ref();
    Ok(match key {
        "n_s" => r.n_s,
        "gamma_plus" => rates.map(|c| c.gamma_plus),
        "gamma_minus" => rates.map(|c| c.gamma_minus),
        "gamma" => rates.map(|c| c.gamma),
        "n_fl" => rates.and_then(|c| c.n_fl),
        "n_m_rwa" => r.n_m_rwa,
        "n_m_nonrwa" => r.n_m_nonrwa,
        "a_m_re" => r.a_m.map(|z| z.re),
        "a_m_im" => r.a_m.map(|z| z.im),
        "gamma_opt" => r.gamma_opt,
        "gamma_opt_integrated" => r.gamma_opt_integrated,
        "markov_ratio" => r.markov_ratio,
        other => return Err(Fail(DOMPO_ERR_KEY, format!("unknown point field `{other}`"))),
    })
}

/// Numeric field by name; `DOMPO_ERR_UNAVAILABLE` when the point has no value.
///
/// # Safety
/// `pt` must come from this library; `key` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dompo_point_get(pt: *const DompoPoint, key: *const c_char, out: *mut f64) -> c_int {
    guard(|| {
        let key = str_arg(key, "key")?;
        match point_field(&handle(pt, "point")?.result, key)? {
            Some(v) => write_f64(out, v),
            None => Err(Fail(DOMPO_ERR_UNAVAILABLE, format!("`{key}` not available for this point"))),
        }
    })
}

/// Full result as JSON, owned by the handle.
///
/// # Safety
/// `pt` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn dompo_point_json(pt: *const DompoPoint) -> *const c_char {
    pt.as_ref().map_or(ptr::null(), |h| h.json.as_ptr())
}

/// Copies the JSON into `buf` (truncated, always NUL-terminated when
/// `len > 0`) and returns the length needed excluding the terminator.
///
/// # Safety
/// `buf` must have room for `len` bytes or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn dompo_point_json_copy(pt: *const DompoPoint, buf: *mut c_char, len: size_t) -> size_t {
    let Some(h) = pt.as_ref() else { return 0 };
    let bytes = h.json.as_bytes();
    if !buf.is_null() && len > 0 {
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}

/// # Safety
/// `pt` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dompo_point_free(pt: *mut DompoPoint) {
    if !pt.is_null() {
        drop(Box::from_raw(pt));
    }
}
