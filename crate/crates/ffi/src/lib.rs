//! C interface to the scenario runner.
//!
//! Scenarios and results are opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns an
//! [`EcsvcError`]; the message for the last failure on the calling thread is
//! available from [`ecsvc_last_error`].
//!
//! Strings are returned by copying into caller buffers. A call with a null
//! or short buffer stores the required size (including the terminating NUL)
//! in `*needed` and returns `ECSVC_ERROR_BUFFER_TOO_SMALL`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ecsvc::bench::{attack, demo_text, run_scenario, write_rows, BenchError, RunOutput};
use ecsvc::sim::{AttackKind, RunStatus, ScenarioConfig, SimError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcsvcError {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Protocol = 4,
    Stall = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Outcome of a finished run, mirroring the CSV `status` column.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcsvcRunStatus {
    Ok = 0,
    Abort = 1,
    Stall = 2,
    Leak = 3,
    ReplayRejected = 4,
    TamperRejected = 5,
    ScanClean = 6,
    Undetected = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcsvcAttack {
    Replay = 0,
    Tamper = 1,
    CuriousSa = 2,
}

/// Parsed scenario configuration.
pub struct EcsvcScenario(ScenarioConfig);

/// Result row of one run.
pub struct EcsvcResult(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(code: EcsvcError, msg: impl Into<String>) -> EcsvcError {
    set_error(msg.into());
    code
}

fn bench_error(e: BenchError) -> EcsvcError {
    let code = match &e {
        BenchError::Sim(SimError::Stall(_)) => EcsvcError::Stall,
        BenchError::Sim(SimError::Protocol(_)) => EcsvcError::Protocol,
        BenchError::Sim(_) => EcsvcError::Config,
        BenchError::Io(_) | BenchError::Csv(_) => EcsvcError::Io,
    };
    fail(code, e.to_string())
}

fn guard(f: impl FnOnce() -> EcsvcError) -> EcsvcError {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(EcsvcError::Panic, "internal panic"))
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, EcsvcError> {
    if s.is_null() {
        return Err(fail(EcsvcError::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(EcsvcError::InvalidUtf8, "string is not UTF-8"))
}

unsafe fn copy_out(text: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> EcsvcError {
    let bytes = text.as_bytes();
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if buf.is_null() || cap < bytes.len() + 1 {
        // Sizing queries leave the last error alone so it can itself be read.
        return EcsvcError::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    *buf.add(bytes.len()) = 0;
    EcsvcError::Ok
}

fn run_status(s: RunStatus) -> EcsvcRunStatus {
    match s {
        RunStatus::Ok => EcsvcRunStatus::Ok,
        RunStatus::Abort => EcsvcRunStatus::Abort,
        RunStatus::Stall => EcsvcRunStatus::Stall,
        RunStatus::Leak => EcsvcRunStatus::Leak,
        RunStatus::ReplayRejected => EcsvcRunStatus::ReplayRejected,
        RunStatus::TamperRejected => EcsvcRunStatus::TamperRejected,
        RunStatus::ScanClean => EcsvcRunStatus::ScanClean,
        RunStatus::Undetected => EcsvcRunStatus::Undetected,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ecsvc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf`.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> EcsvcError {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_out(&msg, buf, cap, needed)
}

/// The default scenario: 32 attributes, one sender, ten receivers.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_scenario_default(out: *mut *mut EcsvcScenario) -> EcsvcError {
    if out.is_null() {
        return fail(EcsvcError::NullPointer, "null output handle");
    }
    *out = Box::into_raw(Box::new(EcsvcScenario(ScenarioConfig::default())));
    EcsvcError::Ok
}

/// Parses a TOML scenario. `*out` is left untouched on failure.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_scenario_from_toml(toml: *const c_char, out: *mut *mut EcsvcScenario) -> EcsvcError {
    guard(|| {
        if out.is_null() {
            return fail(EcsvcError::NullPointer, "null output handle");
        }
        let text = match c_str(toml) {
            Ok(t) => t,
            Err(e) => return e,
        };
        match ScenarioConfig::from_toml(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(EcsvcScenario(cfg)));
                EcsvcError::Ok
            }
            Err(e) => fail(EcsvcError::Config, e.to_string()),
        }
    })
}

/// Sets a sweepable parameter: `data_rate`, `arb_rate`, `n_sys_att`,
/// `n_rx_att`, `n_rx_ecu`, `n_tx_ecu` or `sa_clock` (0.6 or 1.4).
#[no_mangle]
pub unsafe extern "C" fn ecsvc_scenario_set_param(
    scenario: *mut EcsvcScenario,
    key: *const c_char,
    value: f64,
) -> EcsvcError {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(EcsvcError::NullPointer, "null scenario");
        };
        let key = match c_str(key) {
            Ok(k) => k,
            Err(e) => return e,
        };
        match s.0.set_param(key, value) {
            Ok(()) => EcsvcError::Ok,
            Err(e) => fail(EcsvcError::Config, e.to_string()),
        }
    })
}

/// Sets the RNG seed used for key generation and nonces.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_scenario_set_seed(scenario: *mut EcsvcScenario, seed: u64) -> EcsvcError {
    match scenario.as_mut() {
        Some(s) => {
            s.0.seed = seed;
            EcsvcError::Ok
        }
        None => fail(EcsvcError::NullPointer, "null scenario"),
    }
}

/// Serialises the scenario back to TOML.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_scenario_to_toml(
    scenario: *const EcsvcScenario,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> EcsvcError {
    match scenario.as_ref() {
        Some(s) => copy_out(&s.0.to_toml(), buf, cap, needed),
        None => fail(EcsvcError::NullPointer, "null scenario"),
    }
}

#[no_mangle]
pub unsafe extern "C" fn ecsvc_scenario_free(scenario: *mut EcsvcScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

unsafe fn finish(r: Result<RunOutput, BenchError>, out: *mut *mut EcsvcResult) -> EcsvcError {
    match r {
        Ok(o) => {
            *out = Box::into_raw(Box::new(EcsvcResult(o)));
            EcsvcError::Ok
        }
        Err(e) => bench_error(e),
    }
}

/// Runs one epoch of the scenario, or its configured attack.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_run(scenario: *const EcsvcScenario, out: *mut *mut EcsvcResult) -> EcsvcError {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(EcsvcError::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(EcsvcError::NullPointer, "null output handle");
        }
        finish(run_scenario(&s.0), out)
    })
}

/// Runs `kind` against the scenario with `trials` trials.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_attack(
    scenario: *const EcsvcScenario,
    kind: EcsvcAttack,
    trials: usize,
    out: *mut *mut EcsvcResult,
) -> EcsvcError {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(EcsvcError::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(EcsvcError::NullPointer, "null output handle");
        }
        let kind = match kind {
            EcsvcAttack::Replay => AttackKind::Replay,
            EcsvcAttack::Tamper => AttackKind::Tamper,
            EcsvcAttack::CuriousSa => AttackKind::CuriousSa,
        };
        finish(attack::run_attack(kind, &s.0, trials), out)
    })
}

/// Simulated seconds from the first to the last bus or compute event.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_result_total_time_s(result: *const EcsvcResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.row.total_time_s)
}

#[no_mangle]
pub unsafe extern "C" fn ecsvc_result_frames(result: *const EcsvcResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.row.frames)
}

/// Writes the run status to `*status`.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_result_status(result: *const EcsvcResult, status: *mut EcsvcRunStatus) -> EcsvcError {
    let (Some(r), false) = (result.as_ref(), status.is_null()) else {
        return fail(EcsvcError::NullPointer, "null result or status");
    };
    match r.0.row.status() {
        Some(s) => {
            *status = run_status(s);
            EcsvcError::Ok
        }
        None => fail(EcsvcError::Config, format!("unknown status {}", r.0.row.status)),
    }
}

/// The result as CSV: header line plus one row.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_result_csv(
    result: *const EcsvcResult,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> EcsvcError {
    let Some(r) = result.as_ref() else {
        return fail(EcsvcError::NullPointer, "null result");
    };
    let mut bytes = Vec::new();
    if let Err(e) = write_rows(std::slice::from_ref(&r.0.row), &mut bytes) {
        return bench_error(e);
    }
    copy_out(&String::from_utf8_lossy(&bytes), buf, cap, needed)
}

/// The event trace as CSV, when the run produced one.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_result_trace_csv(
    result: *const EcsvcResult,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> EcsvcError {
    let Some(r) = result.as_ref() else {
        return fail(EcsvcError::NullPointer, "null result");
    };
    let text = r.0.report.as_ref().map(|rep| rep.trace_csv()).unwrap_or_default();
    copy_out(&text, buf, cap, needed)
}

#[no_mangle]
pub unsafe extern "C" fn ecsvc_result_free(result: *mut EcsvcResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// The worked toy-group example as text.
#[no_mangle]
pub unsafe extern "C" fn ecsvc_demo(buf: *mut c_char, cap: usize, needed: *mut usize) -> EcsvcError {
    guard(|| copy_out(&demo_text(), buf, cap, needed))
}
