//! Exercise the C ABI from Rust: handle lifecycle, status codes, strings.

use std::ffi::{CStr, CString};
use std::ptr;

use libc::c_char;
use pathflux_ffi::*;

unsafe fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    pathflux_string_free(p);
    s
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(pathflux_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn builtin_simulate_oracle_round_trip() {
    unsafe {
        let name = CString::new("t1").unwrap();
        let mut scm: *mut PathfluxScm = ptr::null_mut();
        assert_eq!(
            pathflux_scm_builtin(name.as_ptr(), &mut scm),
            PathfluxStatus::Ok
        );
        assert_eq!(pathflux_scm_validate(scm), PathfluxStatus::Ok);

        let mut csv1: *mut c_char = ptr::null_mut();
        let mut csv2: *mut c_char = ptr::null_mut();
        assert_eq!(
            pathflux_simulate_csv(scm, 200, 7, &mut csv1),
            PathfluxStatus::Ok
        );
        assert_eq!(
            pathflux_simulate_csv(scm, 200, 7, &mut csv2),
            PathfluxStatus::Ok
        );
        let text1 = take_string(csv1);
        let text2 = take_string(csv2);
        assert_eq!(text1, text2);
        assert!(text1.starts_with("w,a,z,m,y\n"));

        let mut rep: *mut c_char = ptr::null_mut();
        assert_eq!(pathflux_oracle_json(scm, 1, &mut rep), PathfluxStatus::Ok);
        let doc: serde_json::Value = serde_json::from_str(&take_string(rep)).unwrap();
        assert_eq!(doc["influence"]["sum_check"], true);
        assert_eq!(doc["ate"]["sum_check"], true);

        pathflux_scm_free(scm);
    }
}

#[test]
fn json_round_trip_and_validation_errors() {
    unsafe {
        let name = CString::new("t0").unwrap();
        let mut scm: *mut PathfluxScm = ptr::null_mut();
        assert_eq!(
            pathflux_scm_builtin(name.as_ptr(), &mut scm),
            PathfluxStatus::Ok
        );
        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(pathflux_scm_to_json(scm, &mut json), PathfluxStatus::Ok);
        let text = take_string(json);
        pathflux_scm_free(scm);

        let cjson = CString::new(text).unwrap();
        let mut back: *mut PathfluxScm = ptr::null_mut();
        assert_eq!(
            pathflux_scm_from_json(cjson.as_ptr(), &mut back),
            PathfluxStatus::Ok
        );
        pathflux_scm_free(back);

        let bad = CString::new("{\"nope\": 1}").unwrap();
        let mut h: *mut PathfluxScm = ptr::null_mut();
        assert_eq!(
            pathflux_scm_from_json(bad.as_ptr(), &mut h),
            PathfluxStatus::Validation
        );
        assert!(!last_error().is_empty());

        let missing = CString::new("nope").unwrap();
        assert_eq!(
            pathflux_scm_builtin(missing.as_ptr(), &mut h),
            PathfluxStatus::Validation
        );
        assert!(last_error().contains("nope"));
    }
}

#[test]
fn estimate_and_verify_over_the_boundary() {
    unsafe {
        let name = CString::new("t1").unwrap();
        let mut scm: *mut PathfluxScm = ptr::null_mut();
        assert_eq!(
            pathflux_scm_builtin(name.as_ptr(), &mut scm),
            PathfluxStatus::Ok
        );
        let mut csv: *mut c_char = ptr::null_mut();
        assert_eq!(
            pathflux_simulate_csv(scm, 600, 1, &mut csv),
            PathfluxStatus::Ok
        );
        let csv_text = take_string(csv);
        pathflux_scm_free(scm);

        let ccsv = CString::new(csv_text).unwrap();
        let cfg = CString::new(r#"{"folds": 4, "seed": 2}"#).unwrap();
        let mut rep: *mut c_char = ptr::null_mut();
        assert_eq!(
            pathflux_estimate_json(ccsv.as_ptr(), cfg.as_ptr(), 0, &mut rep),
            PathfluxStatus::Ok
        );
        let doc: serde_json::Value = serde_json::from_str(&take_string(rep)).unwrap();
        assert_eq!(doc["config"]["folds"], 4);
        assert_eq!(doc["influence"]["sum_check"], true);

        let spec = CString::new(r#"{"kind": "additivity", "replications": 4}"#).unwrap();
        let mut verdict: *mut c_char = ptr::null_mut();
        assert_eq!(
            pathflux_verify_json(spec.as_ptr(), &mut verdict),
            PathfluxStatus::Ok
        );
        let vdoc: serde_json::Value = serde_json::from_str(&take_string(verdict)).unwrap();
        assert_eq!(vdoc["pass"], true);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut out: *mut PathfluxScm = ptr::null_mut();
        assert_eq!(
            pathflux_scm_from_json(ptr::null(), &mut out),
            PathfluxStatus::NullArgument
        );
        assert_eq!(
            pathflux_scm_validate(ptr::null()),
            PathfluxStatus::NullArgument
        );
        let mut s: *mut c_char = ptr::null_mut();
        assert_eq!(
            pathflux_simulate_csv(ptr::null(), 10, 0, &mut s),
            PathfluxStatus::NullArgument
        );
        pathflux_string_free(ptr::null_mut());
        pathflux_scm_free(ptr::null_mut());
        assert!(!pathflux_version().is_null());
    }
}
