//! C interface to the `lcmpc` design pipeline and tracking controller.
//!
//! Every function returns an [`LcmpcStatus`]. On failure the message is
//! kept per thread and read back with [`lcmpc_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lcmpc::config::ExperimentConfig;
use lcmpc::io::to_canonical_json;
use lcmpc::linalg::Vector;
use lcmpc::mpc::Controller;
use lcmpc::pipeline::{CycleArtifact, Pipeline, TerminalCostArtifact, TubeArtifact};
use lcmpc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcmpcStatus {
    Ok = 0,
    /// Numerical or I/O failure.
    Error = 1,
    /// Malformed configuration.
    Schema = 2,
    /// No cycle, no tube, or an infeasible control problem.
    Infeasible = 3,
    /// A designed certificate failed its check.
    Verification = 4,
    NullPointer = 5,
    InvalidArgument = 6,
    Panic = 7,
}

impl From<&Error> for LcmpcStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => LcmpcStatus::Schema,
            3 => LcmpcStatus::Infeasible,
            _ => match e {
                Error::InvalidArgument(_) | Error::UnsupportedDimension(_) => LcmpcStatus::InvalidArgument,
                _ => LcmpcStatus::Error,
            },
        }
    }
}

/// Sizes of a designed controller.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LcmpcDims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_inputs: usize,
    pub period: usize,
    pub horizon: usize,
}

/// Result of one optimization.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LcmpcSolution {
    pub feasible: bool,
    pub value: f64,
    pub first_input_index: usize,
    pub nodes_expanded: u64,
    pub nodes_pruned: u64,
}

/// Designed controller plus the artifacts it was built from.
pub struct LcmpcController {
    controller: Controller,
    cycle: CycleArtifact,
    terminal: TerminalCostArtifact,
    tube: TubeArtifact,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: LcmpcStatus, msg: impl Into<String>) -> LcmpcStatus {
    set_error(msg);
    status
}

fn fail_with(e: &Error) -> LcmpcStatus {
    fail(e.into(), e.to_string())
}

fn guard(f: impl FnOnce() -> LcmpcStatus) -> LcmpcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LcmpcStatus::Panic, msg)
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

fn design(config_json: &str) -> Result<LcmpcController, LcmpcStatus> {
    let config = ExperimentConfig::from_json_str(config_json).map_err(|e| fail_with(&e))?;
    let pipeline = Pipeline::new(config).map_err(|e| fail_with(&e))?;
    let cycle = pipeline.cycle().map_err(|e| fail_with(&e))?;
    let terminal = pipeline.terminal_cost(&cycle.cycle).map_err(|e| fail_with(&e))?;
    if !terminal.report.passed {
        return Err(fail(LcmpcStatus::Verification, "terminal cost certificate failed its check"));
    }
    let tube = pipeline
        .tube(&cycle.cycle, &terminal.terminal, pipeline.config.mpc.tube)
        .map_err(|e| fail_with(&e))?;
    if !tube.report.passed || !tube.state_report.passed {
        return Err(fail(LcmpcStatus::Verification, "tube failed its invariance check"));
    }
    let controller = pipeline
        .controller(&cycle.cycle, &terminal.terminal, &tube.state_tube)
        .map_err(|e| fail_with(&e))?;
    Ok(LcmpcController {
        controller,
        cycle,
        terminal,
        tube,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lcmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn lcmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Designs cycle, terminal cost and tube from a JSON configuration and
/// builds the controller.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_new(config_json: *const c_char, out: *mut *mut LcmpcController) -> LcmpcStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return fail(LcmpcStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let Ok(text) = CStr::from_ptr(config_json).to_str() else {
            return fail(LcmpcStatus::InvalidArgument, "configuration is not valid UTF-8");
        };
        match design(text) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(c));
                LcmpcStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// # Safety
/// `ctrl` must come from [`lcmpc_controller_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_free(ctrl: *mut LcmpcController) {
    if !ctrl.is_null() {
        drop(Box::from_raw(ctrl));
    }
}

/// # Safety
/// `ctrl` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_dims(ctrl: *const LcmpcController, out: *mut LcmpcDims) -> LcmpcStatus {
    guard(|| {
        let (Some(c), false) = (ctrl.as_ref(), out.is_null()) else {
            return fail(LcmpcStatus::NullPointer, "null argument");
        };
        let sys = c.controller.system();
        let cfg = c.controller.config();
        *out = LcmpcDims {
            n_x: sys.n_x(),
            n_u: sys.inputs().elements()[0].len(),
            n_inputs: sys.num_inputs(),
            period: cfg.cycle.period(),
            horizon: cfg.horizon,
        };
        LcmpcStatus::Ok
    })
}

/// Sets the worker count of the tree search.
///
/// # Safety
/// `ctrl` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_set_threads(ctrl: *mut LcmpcController, threads: usize) -> LcmpcStatus {
    guard(|| {
        let Some(c) = ctrl.as_mut() else {
            return fail(LcmpcStatus::NullPointer, "null argument");
        };
        match c.controller.clone().with_threads(threads) {
            Ok(next) => {
                c.controller = next;
                LcmpcStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Copies cycle state `x̄(j mod p)` into `out` (`len` must equal `n_x`).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_cycle_state(
    ctrl: *const LcmpcController,
    j: usize,
    out: *mut f64,
    len: usize,
) -> LcmpcStatus {
    guard(|| {
        let Some(c) = ctrl.as_ref() else {
            return fail(LcmpcStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(LcmpcStatus::NullPointer, "null argument");
        }
        let x = c.controller.config().cycle.state(j);
        if len != x.len() {
            return fail(LcmpcStatus::InvalidArgument, format!("expected {} entries, got {len}", x.len()));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(x.as_slice());
        LcmpcStatus::Ok
    })
}

/// Solves the tracking problem at state `x` and time `k`. The optimal input
/// indices are written to `indices` when it is non-NULL (`indices_len` must
/// then equal the horizon). Returns [`LcmpcStatus::Infeasible`] with
/// `out->feasible == false` when no admissible sequence exists.
///
/// # Safety
/// `x` must hold `n_x` doubles, `out` must be valid, and `indices` must be
/// NULL or hold `indices_len` entries.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_solve(
    ctrl: *const LcmpcController,
    x: *const f64,
    n_x: usize,
    k: usize,
    out: *mut LcmpcSolution,
    indices: *mut usize,
    indices_len: usize,
) -> LcmpcStatus {
    guard(|| {
        let (Some(c), Some(x), false) = (ctrl.as_ref(), slice(x, n_x), out.is_null()) else {
            return fail(LcmpcStatus::NullPointer, "null argument");
        };
        let horizon = c.controller.config().horizon;
        if !indices.is_null() && indices_len != horizon {
            return fail(LcmpcStatus::InvalidArgument, format!("expected {horizon} indices, got {indices_len}"));
        }
        let sol = match c.controller.solve(&Vector::from_column_slice(x), k) {
            Ok(s) => s,
            Err(e) => return fail_with(&e),
        };
        *out = LcmpcSolution {
            feasible: sol.feasible,
            value: sol.value,
            first_input_index: sol.input_indices.first().copied().unwrap_or(0),
            nodes_expanded: sol.nodes_expanded,
            nodes_pruned: sol.nodes_pruned,
        };
        if !sol.feasible {
            return fail(LcmpcStatus::Infeasible, format!("MPC problem is infeasible at k = {k}"));
        }
        if !indices.is_null() {
            std::slice::from_raw_parts_mut(indices, indices_len).copy_from_slice(&sol.input_indices);
        }
        LcmpcStatus::Ok
    })
}

/// Applies input `input_index` to the plant: `next = A x + b`.
///
/// # Safety
/// `x` and `next` must each hold `n_x` doubles.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_plant_step(
    ctrl: *const LcmpcController,
    x: *const f64,
    n_x: usize,
    input_index: usize,
    next: *mut f64,
) -> LcmpcStatus {
    guard(|| {
        let (Some(c), Some(x), false) = (ctrl.as_ref(), slice(x, n_x), next.is_null()) else {
            return fail(LcmpcStatus::NullPointer, "null argument");
        };
        let n = c.controller.system().n_x();
        if n_x != n {
            return fail(LcmpcStatus::InvalidArgument, format!("expected {n} entries, got {n_x}"));
        }
        match c.controller.system().step(&Vector::from_column_slice(x), input_index) {
            Ok((x1, _)) => {
                std::slice::from_raw_parts_mut(next, n_x).copy_from_slice(x1.as_slice());
                LcmpcStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Canonical JSON object with the `cycle`, `terminal_cost` and `tube`
/// artifacts. Release the string with [`lcmpc_string_free`].
///
/// # Safety
/// `ctrl` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_controller_artifacts_json(
    ctrl: *const LcmpcController,
    out: *mut *mut c_char,
) -> LcmpcStatus {
    guard(|| {
        let (Some(c), false) = (ctrl.as_ref(), out.is_null()) else {
            return fail(LcmpcStatus::NullPointer, "null argument");
        };
        let value = serde_json::json!({
            "cycle": &c.cycle,
            "terminal_cost": &c.terminal,
            "tube": &c.tube,
        });
        match to_canonical_json(&value).map(CString::new) {
            Ok(Ok(s)) => {
                *out = s.into_raw();
                LcmpcStatus::Ok
            }
            Ok(Err(e)) => fail(LcmpcStatus::Error, e.to_string()),
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcmpc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
