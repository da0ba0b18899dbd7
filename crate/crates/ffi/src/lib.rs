//! C interface to the capplan planner.
//!
//! Models live behind an opaque [`CapplanModel`] handle. Every fallible call
//! returns a [`CapplanStatus`]; on failure [`capplan_last_error`] holds a
//! message for the calling thread. Strings handed out by this library must be
//! released with [`capplan_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use capplan::encoder::build;
use capplan::model::{validate, CapabilityModel};
use capplan::planner::{plan, PlanError, PlanOutcome, PlannerConfig};
use capplan::smt::{emit, SolverConfig};
use capplan::{SynonymMode, SynonymyIndex};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapplanStatus {
    Ok = 0,
    /// Planning finished without a plan; the result document says why.
    NoPlan = 1,
    /// The model parsed but failed validation.
    InvalidModel = 2,
    NullArgument = 10,
    InvalidUtf8 = 11,
    /// The document is not a well-formed capability model.
    ModelError = 12,
    EncodeError = 13,
    SolverError = 14,
    InvalidArgument = 15,
    Panic = 99,
}

/// Opaque handle to a parsed capability model.
pub struct CapplanModel {
    model: CapabilityModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CapplanPlanOptions {
    /// Solver command line, split on whitespace. NULL means `z3 -in`.
    pub solver_command: *const c_char,
    /// Per-check limit in seconds; zero or less disables it.
    pub timeout_seconds: f64,
    pub expanded_synonyms: bool,
    pub incremental: bool,
    pub minimize_core: bool,
    pub produce_cores: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type Outcome<T> = Result<T, (CapplanStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome<CapplanStatus>) -> CapplanStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CapplanStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err((CapplanStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (CapplanStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn model_ref<'a>(m: *const CapplanModel) -> Outcome<&'a CapabilityModel> {
    m.as_ref()
        .map(|h| &h.model)
        .ok_or((CapplanStatus::NullArgument, "model is NULL".into()))
}

unsafe fn hand_out(out: *mut *mut c_char, s: String) -> Outcome<()> {
    if out.is_null() {
        return Err((CapplanStatus::NullArgument, "output pointer is NULL".into()));
    }
    let s = CString::new(s).map_err(|e| (CapplanStatus::Panic, e.to_string()))?;
    *out = s.into_raw();
    Ok(())
}

unsafe fn hand_out_model(out: *mut *mut CapplanModel, model: CapabilityModel) -> Outcome<CapplanStatus> {
    if out.is_null() {
        return Err((CapplanStatus::NullArgument, "output pointer is NULL".into()));
    }
    *out = Box::into_raw(Box::new(CapplanModel { model }));
    Ok(CapplanStatus::Ok)
}

fn model_error(e: impl std::fmt::Display) -> (CapplanStatus, String) {
    (CapplanStatus::ModelError, e.to_string())
}

/// Parses a single document holding both domain and problem.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn capplan_model_from_json(json: *const c_char, out: *mut *mut CapplanModel) -> CapplanStatus {
    guard(|| {
        let model = CapabilityModel::from_json_str(text(json, "json")?).map_err(model_error)?;
        hand_out_model(out, model)
    })
}

/// Merges a domain document with a problem document.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn capplan_model_from_documents(
    domain: *const c_char,
    problem: *const c_char,
    out: *mut *mut CapplanModel,
) -> CapplanStatus {
    guard(|| {
        let model =
            CapabilityModel::from_documents(text(domain, "domain")?, text(problem, "problem")?).map_err(model_error)?;
        hand_out_model(out, model)
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn capplan_model_free(model: *mut CapplanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes a JSON report `{"valid": bool, "diagnostics": [...]}` to `out_json`.
/// Returns `InvalidModel` when there are findings.
///
/// # Safety
/// `model` must be a live handle and `out_json` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn capplan_validate(model: *const CapplanModel, out_json: *mut *mut c_char) -> CapplanStatus {
    guard(|| {
        let diagnostics = validate(model_ref(model)?);
        let report = serde_json::json!({ "valid": diagnostics.is_empty(), "diagnostics": diagnostics });
        hand_out(out_json, report.to_string())?;
        if diagnostics.is_empty() {
            Ok(CapplanStatus::Ok)
        } else {
            set_error(diagnostics[0].to_string());
            Ok(CapplanStatus::InvalidModel)
        }
    })
}

/// Writes the SMT-LIB2 script for `bound + 1` happenings to `out_smt`.
///
/// # Safety
/// `model` must be a live handle and `out_smt` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn capplan_dump_smt(
    model: *const CapplanModel,
    bound: u32,
    expanded_synonyms: bool,
    out_smt: *mut *mut c_char,
) -> CapplanStatus {
    guard(|| {
        let model = model_ref(model)?;
        let diagnostics = validate(model);
        if let Some(first) = diagnostics.first() {
            return Err((CapplanStatus::InvalidModel, first.to_string()));
        }
        let mode = if expanded_synonyms {
            SynonymMode::Expanded
        } else {
            SynonymMode::Collapsed
        };
        let enc = build(model, &SynonymyIndex::new(model), bound as usize, mode)
            .map_err(|e| (CapplanStatus::EncodeError, e.to_string()))?;
        hand_out(out_smt, emit(&enc, true))?;
        Ok(CapplanStatus::Ok)
    })
}

#[no_mangle]
pub extern "C" fn capplan_plan_options_default() -> CapplanPlanOptions {
    CapplanPlanOptions {
        solver_command: ptr::null(),
        timeout_seconds: 0.0,
        expanded_synonyms: false,
        incremental: false,
        minimize_core: false,
        produce_cores: true,
    }
}

unsafe fn planner_config(options: *const CapplanPlanOptions) -> Outcome<PlannerConfig> {
    let o = options
        .as_ref()
        .copied()
        .unwrap_or_else(|| capplan_plan_options_default());
    let mut solver = SolverConfig {
        produce_cores: o.produce_cores,
        ..SolverConfig::default()
    };
    if !o.solver_command.is_null() {
        let line = text(o.solver_command, "solver_command")?;
        if line.split_whitespace().next().is_none() {
            return Err((CapplanStatus::InvalidArgument, "solver_command is empty".into()));
        }
        solver = solver.with_command_line(line);
    }
    if o.timeout_seconds.is_nan() {
        return Err((CapplanStatus::InvalidArgument, "timeout_seconds is NaN".into()));
    }
    if o.timeout_seconds > 0.0 {
        solver.timeout = Some(Duration::from_secs_f64(o.timeout_seconds));
    }
    Ok(PlannerConfig {
        solver,
        mode: if o.expanded_synonyms {
            SynonymMode::Expanded
        } else {
            SynonymMode::Collapsed
        },
        incremental: o.incremental,
        minimize_core: o.minimize_core,
    })
}

/// Searches for a plan with at most `max_happenings + 1` happenings and writes
/// either the plan document or a `noPlan` report to `out_json`.
/// `options` may be NULL for defaults.
///
/// # Safety
/// `model` must be a live handle, `options` NULL or valid, and `out_json` a
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn capplan_plan(
    model: *const CapplanModel,
    max_happenings: u32,
    options: *const CapplanPlanOptions,
    out_json: *mut *mut c_char,
) -> CapplanStatus {
    guard(|| {
        let model = model_ref(model)?;
        let config = planner_config(options)?;
        let outcome = plan(model, max_happenings as usize, &config).map_err(|e| {
            let status = match e {
                PlanError::InvalidModel(_) => CapplanStatus::InvalidModel,
                PlanError::Encode(_) => CapplanStatus::EncodeError,
                PlanError::Solver(_) | PlanError::Extract(_) => CapplanStatus::SolverError,
            };
            (status, e.to_string())
        })?;
        hand_out(out_json, outcome.to_json(model).to_string())?;
        Ok(match outcome {
            PlanOutcome::Found { .. } => CapplanStatus::Ok,
            PlanOutcome::NotFound(_) => CapplanStatus::NoPlan,
        })
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn capplan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn capplan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn capplan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
