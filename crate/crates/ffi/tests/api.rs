use std::ffi::{c_char, CStr, CString};
use std::ptr;

use ecsvc_ffi::*;

const TINY: &str = "name = \"ffi\"\n[group]\npreset = \"tiny\"\n[costs]\nextrapolate = true\n\
                    [nodes]\nn_sys_att = 4\nn_rx_att = 2\nreceivers_per_sender = 2\n";

fn read(f: impl Fn(*mut c_char, usize, *mut usize) -> EcsvcError) -> String {
    let mut needed = 0usize;
    assert_eq!(f(ptr::null_mut(), 0, &mut needed), EcsvcError::BufferTooSmall);
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(f(buf.as_mut_ptr(), buf.len(), &mut needed), EcsvcError::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned()
}

fn last_error() -> String {
    read(|b, c, n| unsafe { ecsvc_last_error(b, c, n) })
}

fn tiny() -> *mut EcsvcScenario {
    let text = CString::new(TINY).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { ecsvc_scenario_from_toml(text.as_ptr(), &mut s) },
        EcsvcError::Ok
    );
    s
}

#[test]
fn run_round_trip() {
    let s = tiny();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { ecsvc_run(s, &mut r) }, EcsvcError::Ok);
    let mut status = EcsvcRunStatus::Abort;
    assert_eq!(unsafe { ecsvc_result_status(r, &mut status) }, EcsvcError::Ok);
    assert_eq!(status, EcsvcRunStatus::Ok);
    assert!(unsafe { ecsvc_result_total_time_s(r) } > 0.0);
    assert!(unsafe { ecsvc_result_frames(r) } > 0);
    let csv = read(|b, c, n| unsafe { ecsvc_result_csv(r, b, c, n) });
    assert!(csv.starts_with("name,seed,group,"));
    assert!(csv.lines().nth(1).unwrap().starts_with("ffi,1,tiny,"));
    let trace = read(|b, c, n| unsafe { ecsvc_result_trace_csv(r, b, c, n) });
    assert!(trace.starts_with("time_s,node,kind,detail"));
    unsafe {
        ecsvc_result_free(r);
        ecsvc_scenario_free(s);
    }
}

#[test]
fn parameters_and_errors() {
    let s = tiny();
    let key = CString::new("data_rate").unwrap();
    assert_eq!(
        unsafe { ecsvc_scenario_set_param(s, key.as_ptr(), 8e6) },
        EcsvcError::Ok
    );
    assert_eq!(unsafe { ecsvc_scenario_set_seed(s, 7) }, EcsvcError::Ok);
    let toml = read(|b, c, n| unsafe { ecsvc_scenario_to_toml(s, b, c, n) });
    assert!(toml.contains("data_rate = 8000000.0"), "{toml}");
    assert!(toml.contains("seed = 7"));

    let bad = CString::new("colour").unwrap();
    assert_eq!(
        unsafe { ecsvc_scenario_set_param(s, bad.as_ptr(), 1.0) },
        EcsvcError::Config
    );
    assert!(last_error().contains("colour"));

    let text = CString::new("bogus = 1").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { ecsvc_scenario_from_toml(text.as_ptr(), &mut out) },
        EcsvcError::Config
    );
    assert!(out.is_null());
    assert!(last_error().contains("bogus"));

    assert_eq!(
        unsafe { ecsvc_run(ptr::null(), &mut ptr::null_mut()) },
        EcsvcError::NullPointer
    );
    assert_eq!(
        unsafe { ecsvc_scenario_from_toml(ptr::null(), &mut out) },
        EcsvcError::NullPointer
    );
    let invalid = [0xffu8 as c_char, 0];
    assert_eq!(
        unsafe { ecsvc_scenario_from_toml(invalid.as_ptr(), &mut out) },
        EcsvcError::InvalidUtf8
    );
    assert!(unsafe { ecsvc_result_total_time_s(ptr::null()) }.is_nan());
    unsafe {
        ecsvc_scenario_free(s);
        ecsvc_scenario_free(ptr::null_mut());
        ecsvc_result_free(ptr::null_mut());
    }
}

#[test]
fn attacks() {
    let s = tiny();
    for (kind, want) in [
        (EcsvcAttack::Replay, EcsvcRunStatus::ReplayRejected),
        (EcsvcAttack::Tamper, EcsvcRunStatus::TamperRejected),
        (EcsvcAttack::CuriousSa, EcsvcRunStatus::ScanClean),
    ] {
        let mut r = ptr::null_mut();
        assert_eq!(unsafe { ecsvc_attack(s, kind, 6, &mut r) }, EcsvcError::Ok);
        let mut status = EcsvcRunStatus::Ok;
        assert_eq!(unsafe { ecsvc_result_status(r, &mut status) }, EcsvcError::Ok);
        assert_eq!(status, want);
        unsafe { ecsvc_result_free(r) };
    }
    unsafe { ecsvc_scenario_free(s) };
}

#[test]
fn demo_and_version() {
    let text = read(|b, c, n| unsafe { ecsvc_demo(b, c, n) });
    assert!(text.contains("A = 16"));
    assert!(text.contains("D = 6"));
    let v = unsafe { CStr::from_ptr(ecsvc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn short_buffer_is_not_written() {
    let mut buf = [1 as c_char; 4];
    let mut needed = 0;
    assert_eq!(
        unsafe { ecsvc_demo(buf.as_mut_ptr(), buf.len(), &mut needed) },
        EcsvcError::BufferTooSmall
    );
    assert!(needed > 4);
    assert_eq!(buf, [1; 4]);
}
