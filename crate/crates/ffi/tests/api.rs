use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use lcmpc_ffi::*;

fn config(name: &str) -> CString {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/configs").join(format!("{name}.json"));
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_error() -> String {
    let p = lcmpc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_controller(name: &str) -> *mut LcmpcController {
    let mut ctrl = ptr::null_mut();
    let status = unsafe { lcmpc_controller_new(config(name).as_ptr(), &mut ctrl) };
    assert_eq!(status, LcmpcStatus::Ok);
    assert!(!ctrl.is_null());
    ctrl
}

#[test]
fn closed_loop_through_the_c_api() {
    let ctrl = new_controller("example1");
    let mut dims = LcmpcDims::default();
    assert_eq!(unsafe { lcmpc_controller_dims(ctrl, &mut dims) }, LcmpcStatus::Ok);
    assert_eq!((dims.n_x, dims.n_u, dims.n_inputs, dims.period, dims.horizon), (2, 1, 2, 3, 4));
    assert_eq!(unsafe { lcmpc_controller_set_threads(ctrl, 2) }, LcmpcStatus::Ok);

    let mut x = [-10.0, 7.0];
    let mut seq = [0usize; 4];
    let mut last_value = f64::INFINITY;
    for k in 0..60 {
        let mut sol = LcmpcSolution::default();
        let s = unsafe { lcmpc_controller_solve(ctrl, x.as_ptr(), 2, k, &mut sol, seq.as_mut_ptr(), seq.len()) };
        assert_eq!(s, LcmpcStatus::Ok);
        assert!(sol.feasible);
        assert_eq!(sol.first_input_index, seq[0]);
        assert!(sol.value <= last_value + 1e-9);
        last_value = sol.value;
        let mut next = [0.0; 2];
        assert_eq!(
            unsafe { lcmpc_controller_plant_step(ctrl, x.as_ptr(), 2, seq[0], next.as_mut_ptr()) },
            LcmpcStatus::Ok
        );
        x = next;
    }
    let mut xbar = [0.0; 2];
    assert_eq!(unsafe { lcmpc_controller_cycle_state(ctrl, 60, xbar.as_mut_ptr(), 2) }, LcmpcStatus::Ok);
    assert!(((x[0] - xbar[0]).powi(2) + (x[1] - xbar[1]).powi(2)).sqrt() < 1e-3);
    unsafe { lcmpc_controller_free(ctrl) };
}

#[test]
fn artifacts_are_canonical_json() {
    let ctrl = new_controller("example1");
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { lcmpc_controller_artifacts_json(ctrl, &mut text) }, LcmpcStatus::Ok);
    let json = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    unsafe { lcmpc_string_free(text) };
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["cycle"]["cycle"]["input_indices"], serde_json::json!([0, 0, 1]));
    assert!(v["terminal_cost"]["report"]["passed"].as_bool().unwrap());
    assert!(v["tube"]["report"]["passed"].as_bool().unwrap());
    unsafe { lcmpc_controller_free(ctrl) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut ctrl = ptr::null_mut();
    let bad = CString::new(r#"{"system": {}}"#).unwrap();
    assert_eq!(unsafe { lcmpc_controller_new(bad.as_ptr(), &mut ctrl) }, LcmpcStatus::Schema);
    assert!(ctrl.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { lcmpc_controller_new(ptr::null(), &mut ctrl) }, LcmpcStatus::NullPointer);

    let ctrl = new_controller("example1");
    assert!(lcmpc_last_error().is_null());
    let mut sol = LcmpcSolution::default();
    let far = [-14.99, 14.99];
    let s = unsafe { lcmpc_controller_solve(ctrl, far.as_ptr(), 2, 0, &mut sol, ptr::null_mut(), 0) };
    if s == LcmpcStatus::Infeasible {
        assert!(!sol.feasible);
        assert!(last_error().contains("infeasible"));
    } else {
        assert_eq!(s, LcmpcStatus::Ok);
    }
    let x = [0.0; 3];
    let s = unsafe { lcmpc_controller_solve(ctrl, x.as_ptr(), 3, 0, &mut sol, ptr::null_mut(), 0) };
    assert_eq!(s, LcmpcStatus::InvalidArgument);
    let mut seq = [0usize; 2];
    let s = unsafe { lcmpc_controller_solve(ctrl, x.as_ptr(), 2, 0, &mut sol, seq.as_mut_ptr(), 2) };
    assert_eq!(s, LcmpcStatus::InvalidArgument);
    let mut next = [0.0; 2];
    let s = unsafe { lcmpc_controller_plant_step(ctrl, x.as_ptr(), 2, 9, next.as_mut_ptr()) };
    assert_ne!(s, LcmpcStatus::Ok);
    unsafe { lcmpc_controller_free(ctrl) };
    unsafe { lcmpc_controller_free(ptr::null_mut()) };
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(lcmpc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = r#"
#include "lcmpc.h"
int main(void) {
    LcmpcController *ctrl = NULL;
    LcmpcSolution sol;
    LcmpcDims dims;
    LcmpcStatus s = lcmpc_controller_new("{}", &ctrl);
    (void)sol; (void)dims;
    return s == LCMPC_STATUS_OK ? 0 : 1;
}
"#;
    for (file, compiler) in [("check.c", "cc"), ("check.cpp", "c++")] {
        let path = dir.path().join(file);
        std::fs::write(&path, src).unwrap();
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&include)
            .arg(&path)
            .output()
            .unwrap();
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
