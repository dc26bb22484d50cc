//! C ABI for the promotion-contest toolkit.
//!
//! Conventions:
//! - models are opaque handles created from the same JSON configuration
//!   documents the CLI consumes and freed with [`contest_model_free`];
//! - every fallible call reports a [`ContestStatus`] and, on failure, leaves
//!   a thread-local message readable via [`contest_last_error_message`];
//! - returned strings are UTF-8, owned by the caller, and must be released
//!   with [`contest_string_free`];
//! - no call unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use contest_core::cli::RunConfig;
use contest_core::engine::{self, PreparedContest};
use contest_core::index::IndexTable;
use contest_core::lab;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContestStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    NumericError = 3,
    TooLarge = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn contest_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static string; do not free.
#[no_mangle]
pub extern "C" fn contest_version_string() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// An opaque prepared contest: workers, index tables, samplers.
pub struct ContestModel {
    prep: PreparedContest,
}

fn status_out(out: *mut ContestStatus, value: ContestStatus) {
    if !out.is_null() {
        // SAFETY: caller promises `out` points to a writable ContestStatus.
        unsafe { *out = value };
    }
}

fn guard<T>(
    out: *mut ContestStatus,
    fallback: T,
    body: impl FnOnce() -> Result<T, (ContestStatus, String)>,
) -> T {
    let result = catch_unwind(AssertUnwindSafe(body));
    match result {
        Ok(Ok(v)) => {
            status_out(out, ContestStatus::Ok);
            v
        }
        Ok(Err((code, msg))) => {
            set_error(&msg);
            status_out(out, code);
            fallback
        }
        Err(_) => {
            set_error("panic inside contest-capi");
            status_out(out, ContestStatus::Panic);
            fallback
        }
    }
}

fn parse_config(config_json: *const c_char) -> Result<PreparedContest, (ContestStatus, String)> {
    if config_json.is_null() {
        return Err((ContestStatus::InvalidArgument, "config_json is null".into()));
    }
    // SAFETY: caller promises a valid NUL-terminated string.
    let text = unsafe { CStr::from_ptr(config_json) }
        .to_str()
        .map_err(|e| {
            (
                ContestStatus::InvalidArgument,
                format!("config is not UTF-8: {e}"),
            )
        })?;
    let run: RunConfig = serde_json::from_str(text).map_err(|e| {
        (
            ContestStatus::ParseError,
            format!("config parse error: {e}"),
        )
    })?;
    let config = run
        .to_contest(Path::new("."))
        .map_err(|e| (ContestStatus::ParseError, e.to_string()))?;
    let (prep, _warnings) =
        PreparedContest::new(config).map_err(|e| (ContestStatus::NumericError, e.to_string()))?;
    Ok(prep)
}

/// Build a model from a configuration document (the CLI's JSON schema).
/// Returns null on failure; inspect `status` and
/// [`contest_last_error_message`].
///
/// # Safety
/// `config_json` must be a valid NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn contest_model_from_json(
    config_json: *const c_char,
    status: *mut ContestStatus,
) -> *mut ContestModel {
    guard(status, std::ptr::null_mut(), || {
        let prep = parse_config(config_json)?;
        Ok(Box::into_raw(Box::new(ContestModel { prep })))
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from [`contest_model_from_json`] and not have been
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn contest_model_free(model: *mut ContestModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

fn borrow_model<'a>(
    model: *const ContestModel,
) -> Result<&'a ContestModel, (ContestStatus, String)> {
    if model.is_null() {
        return Err((ContestStatus::InvalidArgument, "model is null".into()));
    }
    // SAFETY: caller promises a live handle.
    Ok(unsafe { &*model })
}

/// Number of workers in the model; 0 on a null handle.
///
/// # Safety
/// `model` must be a live handle (or null).
#[no_mangle]
pub unsafe extern "C" fn contest_model_n_workers(model: *const ContestModel) -> u32 {
    guard(std::ptr::null_mut(), 0, || {
        Ok(borrow_model(model)?.prep.n_workers() as u32)
    })
}

fn to_owned_cstring(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(std::ptr::null_mut())
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by a contest-capi call and not freed before.
#[no_mangle]
pub unsafe extern "C" fn contest_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Full index table of one worker, as JSON. Caller frees the string.
///
/// # Safety
/// `model` must be a live handle; `status` null or writable.
#[no_mangle]
pub unsafe extern "C" fn contest_index_table_json(
    model: *const ContestModel,
    worker: u32,
    status: *mut ContestStatus,
) -> *mut c_char {
    guard(status, std::ptr::null_mut(), || {
        let model = borrow_model(model)?;
        let spec = model.prep.config.workers.get(worker as usize).ok_or((
            ContestStatus::InvalidArgument,
            format!("no worker {worker}"),
        ))?;
        let table =
            IndexTable::build(spec).map_err(|e| (ContestStatus::NumericError, e.to_string()))?;
        Ok(to_owned_cstring(
            serde_json::to_string_pretty(&table).expect("table serializes"),
        ))
    })
}

/// Exact principal value of the index contest (the envelope identity's
/// product-chain evaluation). NaN on failure.
///
/// # Safety
/// `model` must be a live handle; `status` null or writable.
#[no_mangle]
pub unsafe extern "C" fn contest_envelope_value(
    model: *const ContestModel,
    status: *mut ContestStatus,
) -> f64 {
    guard(status, f64::NAN, || {
        let model = borrow_model(model)?;
        engine::principal_value_envelope(&model.prep).map_err(|e| match e {
            engine::EngineError::StateSpaceOverflow { .. } => {
                (ContestStatus::TooLarge, e.to_string())
            }
            other => (ContestStatus::NumericError, other.to_string()),
        })
    })
}

/// Simulate the index contest and return the summary JSON the CLI writes.
/// Caller frees the string.
///
/// # Safety
/// `model` must be a live handle; `status` null or writable.
#[no_mangle]
pub unsafe extern "C" fn contest_simulate_summary_json(
    model: *const ContestModel,
    replications: u64,
    seed: u64,
    status: *mut ContestStatus,
) -> *mut c_char {
    guard(status, std::ptr::null_mut(), || {
        let model = borrow_model(model)?;
        if replications == 0 {
            return Err((
                ContestStatus::InvalidArgument,
                "replications must be positive".into(),
            ));
        }
        let set = engine::run_replications(&model.prep, replications as usize, seed, 0)
            .map_err(|e| (ContestStatus::NumericError, e.to_string()))?;
        let mut config = model.prep.config.clone();
        config.seed = seed;
        let summary = contest_core::cli::summarize(&config, &set);
        Ok(to_owned_cstring(
            serde_json::to_string_pretty(&summary).expect("summary serializes"),
        ))
    })
}

/// Trial length from the ladder display `λc∫₀^t e^{-(r+λ)s}ds = g`.
/// NaN (with a status) when the prize is too large to ever bind.
///
/// # Safety
/// `status` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn contest_tbar(
    lam: f64,
    c: f64,
    g: f64,
    r: f64,
    status: *mut ContestStatus,
) -> f64 {
    guard(status, f64::NAN, || {
        lab::tbar(lam, c, g, r).map_err(|e| (ContestStatus::InvalidArgument, e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "discount": 0.25, "step": 0.2, "outside_option": 0.15,
        "horizon_cap": 120.0, "replications": 100, "seed": 17,
        "workers": [
            {"chain": {"bad_news": {"p0": 0.55, "lam": 1.0, "grid_points": 5, "delta": 0.2}},
             "pi": "type", "cost": {"constant": 0.02}, "prize": 0.6},
            {"chain": {"bad_news": {"p0": 0.45, "lam": 1.0, "grid_points": 5, "delta": 0.2}},
             "pi": "type", "cost": {"constant": 0.02}, "prize": 0.6}
        ]
    }"#;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn model_lifecycle_and_values() {
        let mut status = ContestStatus::Panic;
        let config = cstr(CONFIG);
        let model = unsafe { contest_model_from_json(config.as_ptr(), &mut status) };
        assert_eq!(status, ContestStatus::Ok);
        assert!(!model.is_null());
        assert_eq!(unsafe { contest_model_n_workers(model) }, 2);

        let value = unsafe { contest_envelope_value(model, &mut status) };
        assert_eq!(status, ContestStatus::Ok);
        assert!((value - 2.539432896632628).abs() < 1e-9);

        let summary = unsafe { contest_simulate_summary_json(model, 500, 7, &mut status) };
        assert_eq!(status, ContestStatus::Ok);
        let text = unsafe { CStr::from_ptr(summary) }
            .to_str()
            .unwrap()
            .to_string();
        assert!(text.contains("principal_mean"));
        unsafe { contest_string_free(summary) };

        let table = unsafe { contest_index_table_json(model, 0, &mut status) };
        assert_eq!(status, ContestStatus::Ok);
        let text = unsafe { CStr::from_ptr(table) }
            .to_str()
            .unwrap()
            .to_string();
        assert!(text.contains("gittins"));
        unsafe { contest_string_free(table) };

        unsafe { contest_model_free(model) };
    }

    #[test]
    fn errors_set_status_and_message() {
        let mut status = ContestStatus::Ok;
        let bad = cstr("{\"not\": \"a config\"}");
        let model = unsafe { contest_model_from_json(bad.as_ptr(), &mut status) };
        assert!(model.is_null());
        assert_eq!(status, ContestStatus::ParseError);
        let msg = unsafe { CStr::from_ptr(contest_last_error_message()) };
        assert!(!msg.to_bytes().is_empty());

        let model = unsafe { contest_model_from_json(std::ptr::null(), &mut status) };
        assert!(model.is_null());
        assert_eq!(status, ContestStatus::InvalidArgument);
    }

    #[test]
    fn tbar_matches_the_lab_and_flags_domain_errors() {
        let mut status = ContestStatus::Panic;
        let t = unsafe { contest_tbar(1.0, 1.0, 0.5, 0.1, &mut status) };
        assert_eq!(status, ContestStatus::Ok);
        assert!((t - 0.7259160873).abs() < 1e-9);

        let t = unsafe { contest_tbar(1.0, 1.0, 5.0, 0.1, &mut status) };
        assert_eq!(status, ContestStatus::InvalidArgument);
        assert!(t.is_nan());
    }

    #[test]
    fn version_string_is_static() {
        let v = unsafe { CStr::from_ptr(contest_version_string()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
