//! Exercises the C surface through the exported extern functions: handle
//! lifecycle, error codes, last-error reporting and file output.

use std::ffi::{CStr, CString};

use cardioloop_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(cardioloop_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn reference_model_simulates_and_reports_outputs() {
    unsafe {
        let model = cardioloop_model_reference();
        assert!(!model.is_null());

        let mut hr = 0.0;
        let s = cardioloop_model_get(model, cstr("heart_rate_bpm").as_ptr(), &mut hr);
        assert_eq!(s, CardioloopStatus::Ok);
        assert_eq!(hr, 80.0);

        let mut sim = std::ptr::null_mut();
        let s = cardioloop_simulate(model, 250, &mut sim);
        assert_eq!(s, CardioloopStatus::Ok);
        assert!(cardioloop_sim_beats(sim) > 0);

        let mut ef = 0.0;
        let s = cardioloop_sim_output(sim, cstr("LV_EF").as_ptr(), &mut ef);
        assert_eq!(s, CardioloopStatus::Ok);
        assert!((50.0..75.0).contains(&ef), "LV_EF {ef}");

        let json = cardioloop_sim_outputs_json(sim);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_string();
        assert!(text.contains("\"ShuntFraction\""));
        cardioloop_string_free(json);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("beat.csv");
        let s = cardioloop_sim_write_transient_csv(
            sim,
            cstr(path.to_str().unwrap()).as_ptr(),
        );
        assert_eq!(s, CardioloopStatus::Ok);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 251);

        cardioloop_sim_free(sim);
        cardioloop_model_free(model);
    }
}

#[test]
fn json_round_trip_through_the_boundary() {
    unsafe {
        let model = cardioloop_model_reference();
        let json = cardioloop_model_to_json(model);
        assert!(!json.is_null());
        let mut back = std::ptr::null_mut();
        let s = cardioloop_model_from_json(json, &mut back);
        assert_eq!(s, CardioloopStatus::Ok);
        let mut hr = 0.0;
        cardioloop_model_get(back, cstr("heart_rate_bpm").as_ptr(), &mut hr);
        assert_eq!(hr, 80.0);
        cardioloop_string_free(json);
        cardioloop_model_free(back);
        cardioloop_model_free(model);
    }
}

#[test]
fn setters_validate_and_report_errors() {
    unsafe {
        let model = cardioloop_model_reference();
        let s = cardioloop_model_set(model, cstr("heart_rate_bpm").as_ptr(), 95.0);
        assert_eq!(s, CardioloopStatus::Ok);
        let mut hr = 0.0;
        cardioloop_model_get(model, cstr("heart_rate_bpm").as_ptr(), &mut hr);
        assert_eq!(hr, 95.0);

        // Unknown key.
        let s = cardioloop_model_set(model, cstr("no_such_key").as_ptr(), 1.0);
        assert_eq!(s, CardioloopStatus::UnknownName);
        let msg = CStr::from_ptr(cardioloop_last_error_message());
        assert!(msg.to_str().unwrap().contains("no_such_key"));

        // Invalid value: negative heart rate fails validation and leaves the
        // model untouched.
        let s = cardioloop_model_set(model, cstr("heart_rate_bpm").as_ptr(), -10.0);
        assert_eq!(s, CardioloopStatus::InvalidInput);
        cardioloop_model_get(model, cstr("heart_rate_bpm").as_ptr(), &mut hr);
        assert_eq!(hr, 95.0);

        cardioloop_model_free(model);
    }
}

#[test]
fn null_arguments_are_rejected_not_crashed() {
    unsafe {
        let mut out = std::ptr::null_mut();
        assert_eq!(
            cardioloop_model_from_json(std::ptr::null(), &mut out),
            CardioloopStatus::NullArgument
        );
        let mut v = 0.0;
        assert_eq!(
            cardioloop_sim_output(std::ptr::null(), cstr("LV_EF").as_ptr(), &mut v),
            CardioloopStatus::NullArgument
        );
        // Frees tolerate null.
        cardioloop_model_free(std::ptr::null_mut());
        cardioloop_sim_free(std::ptr::null_mut());
        cardioloop_string_free(std::ptr::null_mut());
    }
}

#[test]
fn missing_file_maps_to_input_error() {
    unsafe {
        let mut out = std::ptr::null_mut();
        let s = cardioloop_model_from_file(cstr("/nonexistent/params.json").as_ptr(), &mut out);
        assert_eq!(s, CardioloopStatus::InvalidInput);
        assert!(out.is_null());
    }
}

#[test]
fn header_is_generated_with_the_exported_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cardioloop.h");
    let text = std::fs::read_to_string(&header).expect("cbindgen header exists");
    for symbol in [
        "cardioloop_version",
        "cardioloop_model_reference",
        "cardioloop_simulate",
        "cardioloop_sim_output",
        "cardioloop_string_free",
        "CardioloopStatus",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
}
