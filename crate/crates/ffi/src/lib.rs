//! C ABI over the cardioloop library.
//!
//! Objects cross the boundary as opaque handles created and released by this
//! crate; scalar results come back through out-pointers and every fallible
//! call returns a [`CardioloopStatus`]. The most recent error message is
//! kept per thread and readable through
//! [`cardioloop_last_error_message`]. Strings returned as `char*` are owned
//! by the caller and must be released with [`cardioloop_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use cardioloop::model::{
    load_parameters, parameters_from_flat_map, parameters_from_json_str, parameters_to_flat_map,
    reference_parameters, ModelParameters,
};
use cardioloop::observables::{compute_outputs, OutputName, OutputSet};
use cardioloop::solver::{integrate, SolverSettings, Trajectory};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CardioloopStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidString = 2,
    InvalidInput = 3,
    SolverFailure = 4,
    IoError = 5,
    UnknownName = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn status_of(err: &cardioloop::Error) -> CardioloopStatus {
    set_error(&err.to_string());
    if err.is_solver_failure() {
        CardioloopStatus::SolverFailure
    } else {
        match err {
            cardioloop::Error::Io(_) => CardioloopStatus::IoError,
            _ => CardioloopStatus::InvalidInput,
        }
    }
}

/// Parameter set handle.
pub struct CardioloopModel {
    params: ModelParameters,
}

/// Simulated periodic beat handle.
pub struct CardioloopSim {
    trajectory: Trajectory,
    outputs: OutputSet,
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, CardioloopStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(CardioloopStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        CardioloopStatus::InvalidString
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cardioloop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cardioloop_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by a `*_json` function of this
/// library, not yet freed; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a model with the bundled reference parameters.
#[no_mangle]
pub extern "C" fn cardioloop_model_reference() -> *mut CardioloopModel {
    Box::into_raw(Box::new(CardioloopModel {
        params: reference_parameters(),
    }))
}

/// Loads a model from a flat key-value JSON parameter file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_model_from_file(
    path: *const c_char,
    out: *mut *mut CardioloopModel,
) -> CardioloopStatus {
    if out.is_null() {
        set_error("null output pointer");
        return CardioloopStatus::NullArgument;
    }
    let path = match cstr(path) {
        Ok(p) => PathBuf::from(p),
        Err(s) => return s,
    };
    match load_parameters(&path) {
        Ok(params) => {
            *out = Box::into_raw(Box::new(CardioloopModel { params }));
            CardioloopStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Parses a model from flat key-value JSON text.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_model_from_json(
    text: *const c_char,
    out: *mut *mut CardioloopModel,
) -> CardioloopStatus {
    if out.is_null() {
        set_error("null output pointer");
        return CardioloopStatus::NullArgument;
    }
    let text = match cstr(text) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match parameters_from_json_str(text) {
        Ok(params) => {
            *out = Box::into_raw(Box::new(CardioloopModel { params }));
            CardioloopStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Serialises the model as flat key-value JSON; free with
/// [`cardioloop_string_free`].
///
/// # Safety
/// `model` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_model_to_json(model: *const CardioloopModel) -> *mut c_char {
    if model.is_null() {
        set_error("null model");
        return std::ptr::null_mut();
    }
    let map = parameters_to_flat_map(&(*model).params);
    let text = serde_json::to_string_pretty(&map).expect("flat map serialises");
    CString::new(text).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Reads one parameter by its flat key (e.g. `"heart_rate_bpm"`,
/// `"valve.AV.r_open_mmHg_s_per_mL"`).
///
/// # Safety
/// `model` must be a live handle; `key` a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_model_get(
    model: *const CardioloopModel,
    key: *const c_char,
    out: *mut f64,
) -> CardioloopStatus {
    if model.is_null() || out.is_null() {
        set_error("null argument");
        return CardioloopStatus::NullArgument;
    }
    let key = match cstr(key) {
        Ok(k) => k,
        Err(s) => return s,
    };
    let map = parameters_to_flat_map(&(*model).params);
    match map.get(key) {
        Some(v) => {
            *out = *v;
            CardioloopStatus::Ok
        }
        None => {
            set_error(&format!("unknown parameter key {key}"));
            CardioloopStatus::UnknownName
        }
    }
}

/// Overwrites one parameter by its flat key, revalidating the whole set.
///
/// # Safety
/// `model` must be a live handle and `key` a valid string.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_model_set(
    model: *mut CardioloopModel,
    key: *const c_char,
    value: f64,
) -> CardioloopStatus {
    if model.is_null() {
        set_error("null model");
        return CardioloopStatus::NullArgument;
    }
    let key = match cstr(key) {
        Ok(k) => k,
        Err(s) => return s,
    };
    let mut map = parameters_to_flat_map(&(*model).params);
    if !map.contains_key(key) {
        set_error(&format!("unknown parameter key {key}"));
        return CardioloopStatus::UnknownName;
    }
    map.insert(key.to_string(), value);
    match parameters_from_flat_map(&map) {
        Ok(params) => {
            (*model).params = params;
            CardioloopStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Releases a model handle.
///
/// # Safety
/// `model` must be a live handle from this library (or null); it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_model_free(model: *mut CardioloopModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Integrates the model to its periodic steady state.
///
/// `samples_per_beat` of zero picks the default grid (1000 points).
///
/// # Safety
/// `model` must be a live handle; `out` must point to writable storage for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_simulate(
    model: *const CardioloopModel,
    samples_per_beat: usize,
    out: *mut *mut CardioloopSim,
) -> CardioloopStatus {
    if model.is_null() || out.is_null() {
        set_error("null argument");
        return CardioloopStatus::NullArgument;
    }
    let params = &(*model).params;
    let mut settings = SolverSettings::default();
    if samples_per_beat > 0 {
        settings.samples_per_beat = samples_per_beat;
    }
    if let Err(e) = settings.validate() {
        return status_of(&e);
    }
    let trajectory = match integrate(params, &params.initial_state(), &settings) {
        Ok(t) => t,
        Err(e) => return status_of(&e),
    };
    let outputs = match compute_outputs(&trajectory, params) {
        Ok(o) => o,
        Err(e) => return status_of(&e),
    };
    *out = Box::into_raw(Box::new(CardioloopSim {
        trajectory,
        outputs,
    }));
    CardioloopStatus::Ok
}

/// Beats integrated before the periodic state was accepted.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_sim_beats(sim: *const CardioloopSim) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).trajectory.beats_to_converge
}

/// Reads one named output (e.g. `"LV_EF"`, `"PWP_mean"`, `"ShuntFraction"`).
///
/// # Safety
/// `sim` must be a live handle; `name` a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_sim_output(
    sim: *const CardioloopSim,
    name: *const c_char,
    out: *mut f64,
) -> CardioloopStatus {
    if sim.is_null() || out.is_null() {
        set_error("null argument");
        return CardioloopStatus::NullArgument;
    }
    let name = match cstr(name) {
        Ok(n) => n,
        Err(s) => return s,
    };
    match OutputName::parse(name) {
        Some(n) => {
            *out = (*sim).outputs.get(n);
            CardioloopStatus::Ok
        }
        None => {
            set_error(&format!("unknown output name {name}"));
            CardioloopStatus::UnknownName
        }
    }
}

/// All outputs as a JSON map; free with [`cardioloop_string_free`].
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_sim_outputs_json(sim: *const CardioloopSim) -> *mut c_char {
    if sim.is_null() {
        set_error("null simulation");
        return std::ptr::null_mut();
    }
    let text = serde_json::to_string_pretty(&(*sim).outputs).expect("outputs serialise");
    CString::new(text).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Writes the periodic beat as CSV with the time axis normalised to [0, 1).
///
/// # Safety
/// `sim` must be a live handle and `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_sim_write_transient_csv(
    sim: *const CardioloopSim,
    path: *const c_char,
) -> CardioloopStatus {
    if sim.is_null() {
        set_error("null simulation");
        return CardioloopStatus::NullArgument;
    }
    let path = match cstr(path) {
        Ok(p) => PathBuf::from(p),
        Err(s) => return s,
    };
    let file = match std::fs::File::create(&path) {
        Ok(f) => f,
        Err(e) => {
            set_error(&format!("cannot create {}: {e}", path.display()));
            return CardioloopStatus::IoError;
        }
    };
    match (*sim).trajectory.write_csv(std::io::BufWriter::new(file)) {
        Ok(()) => CardioloopStatus::Ok,
        Err(e) => status_of(&e),
    }
}

/// Releases a simulation handle.
///
/// # Safety
/// `sim` must be a live handle from this library (or null); it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cardioloop_sim_free(sim: *mut CardioloopSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
