//! C ABI for the polyopf pipeline: run a case through a relaxation method and
//! read the resulting bound report through an opaque handle.
//!
//! Conventions:
//! - Every function returns a `PolyopfCode`; out-parameters carry results.
//! - Handles are created by `polyopf_solve` and released by
//!   `polyopf_report_free`; strings returned by the library are released by
//!   `polyopf_string_free`.
//! - The last error message is kept in thread-local storage and read with
//!   `polyopf_last_error`.
//! - All panics are caught at the boundary and reported as
//!   `POLYOPF_CODE_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use polyopf::report::Status;
use polyopf::run::{run, Method, RunConfig, RunError};

/// Result code of every C-ABI call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum PolyopfCode {
    /// Success.
    PolyopfCodeOk = 0,
    /// Invalid configuration (unknown case, bad override, bad enum value).
    PolyopfCodeConfig = 1,
    /// The pipeline ran but the solver failed.
    PolyopfCodeSolver = 2,
    /// A required pointer argument was null.
    PolyopfCodeNullArgument = 3,
    /// A string argument was not valid UTF-8.
    PolyopfCodeUtf8 = 4,
    /// A buffer was too small; check the corresponding length query.
    PolyopfCodeBufferTooSmall = 5,
    /// Internal error (caught panic); see `polyopf_last_error`.
    PolyopfCodeInternal = 6,
}

/// Solution status of a completed run.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum PolyopfStatus {
    /// The bound is attained by an extracted feasible point.
    PolyopfStatusGlobalCertified = 0,
    /// Valid lower bound without a certified point.
    PolyopfStatusBoundOnly = 1,
    /// The underlying solve failed.
    PolyopfStatusSolverFailure = 2,
}

/// Opaque bound report handle.
pub struct PolyopfReport {
    output: polyopf::run::RunOutput,
    config: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Returns the last error message recorded on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn polyopf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn guard<F: FnOnce() -> PolyopfCode>(f: F) -> PolyopfCode {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".to_string());
            set_error(&msg);
            PolyopfCode::PolyopfCodeInternal
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, PolyopfCode> {
    if p.is_null() {
        set_error("null string argument");
        return Err(PolyopfCode::PolyopfCodeNullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PolyopfCode::PolyopfCodeUtf8
    })
}

/// Runs `case_name` through the configured pipeline.
///
/// `overrides` is an array of `n_overrides` strings of the form `KEY=VALUE`
/// (e.g. `"V2max=1.022"`); it may be null when `n_overrides` is zero.
/// `formulation` is `"op2"` or `"op4"`; `method` is `"dense"`, `"sparse"`,
/// `"digs"`, or `"lavaei-low"`. `eps`, `max_iter`, and `time_budget` follow
/// the CLI semantics (pass 0 to keep the default). On success, `*out` owns a
/// report that must be released with `polyopf_report_free`.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn polyopf_solve(
    case_name: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    formulation: *const c_char,
    method: *const c_char,
    level: u32,
    eps: f64,
    max_iter: u32,
    time_budget: f64,
    out: *mut *mut PolyopfReport,
) -> PolyopfCode {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return PolyopfCode::PolyopfCodeNullArgument;
        }
        *out = ptr::null_mut();
        let case = match cstr(case_name) {
            Ok(s) => s.to_string(),
            Err(c) => return c,
        };
        let mut cfg = RunConfig {
            case,
            ..RunConfig::default()
        };
        if !formulation.is_null() {
            match cstr(formulation).and_then(|s| {
                polyopf::run::parse_formulation(s).map_err(|e| {
                    set_error(&e.to_string());
                    PolyopfCode::PolyopfCodeConfig
                })
            }) {
                Ok(f) => cfg.formulation = f,
                Err(c) => return c,
            }
        }
        if !method.is_null() {
            match cstr(method).and_then(|s| {
                Method::parse(s).map_err(|e| {
                    set_error(&e.to_string());
                    PolyopfCode::PolyopfCodeConfig
                })
            }) {
                Ok(m) => cfg.method = m,
                Err(c) => return c,
            }
        }
        if level > 0 {
            cfg.level = level as usize;
        }
        if eps > 0.0 {
            cfg.eps = eps;
        }
        if max_iter > 0 {
            cfg.max_iter = max_iter as usize;
        }
        if time_budget > 0.0 {
            cfg.time_budget = time_budget;
        }
        if n_overrides > 0 {
            if overrides.is_null() {
                set_error("null overrides array with nonzero length");
                return PolyopfCode::PolyopfCodeNullArgument;
            }
            for i in 0..n_overrides {
                let s = match cstr(*overrides.add(i)) {
                    Ok(s) => s,
                    Err(c) => return c,
                };
                match s.split_once('=') {
                    Some((k, v)) => cfg.overrides.push((k.trim().into(), v.trim().into())),
                    None => {
                        set_error(&format!("override `{s}` is not KEY=VALUE"));
                        return PolyopfCode::PolyopfCodeConfig;
                    }
                }
            }
        }
        match run(&cfg) {
            Ok(output) => {
                *out = Box::into_raw(Box::new(PolyopfReport {
                    output,
                    config: cfg,
                }));
                PolyopfCode::PolyopfCodeOk
            }
            Err(RunError::Config(msg)) => {
                set_error(&msg);
                PolyopfCode::PolyopfCodeConfig
            }
            Err(RunError::Pipeline(msg)) => {
                set_error(&msg);
                PolyopfCode::PolyopfCodeSolver
            }
        }
    })
}

unsafe fn report<'a>(r: *const PolyopfReport) -> Result<&'a PolyopfReport, PolyopfCode> {
    if r.is_null() {
        set_error("null report handle");
        return Err(PolyopfCode::PolyopfCodeNullArgument);
    }
    Ok(&*r)
}

/// Lower bound on the generation cost, $/h.
///
/// # Safety
/// `r` must be a live handle from `polyopf_solve`.
#[no_mangle]
pub unsafe extern "C" fn polyopf_report_bound(
    r: *const PolyopfReport,
    out: *mut f64,
) -> PolyopfCode {
    guard(|| {
        let rep = match report(r) {
            Ok(rep) => rep,
            Err(c) => return c,
        };
        if out.is_null() {
            set_error("null out pointer");
            return PolyopfCode::PolyopfCodeNullArgument;
        }
        *out = rep.output.report.lower_bound;
        PolyopfCode::PolyopfCodeOk
    })
}

/// Solution status of the run.
///
/// # Safety
/// `r` must be a live handle from `polyopf_solve`.
#[no_mangle]
pub unsafe extern "C" fn polyopf_report_status(
    r: *const PolyopfReport,
    out: *mut PolyopfStatus,
) -> PolyopfCode {
    guard(|| {
        let rep = match report(r) {
            Ok(rep) => rep,
            Err(c) => return c,
        };
        if out.is_null() {
            set_error("null out pointer");
            return PolyopfCode::PolyopfCodeNullArgument;
        }
        *out = match rep.output.report.status {
            Status::GlobalCertified => PolyopfStatus::PolyopfStatusGlobalCertified,
            Status::BoundOnly => PolyopfStatus::PolyopfStatusBoundOnly,
            Status::SolverFailure => PolyopfStatus::PolyopfStatusSolverFailure,
        };
        PolyopfCode::PolyopfCodeOk
    })
}

/// Eigenvalue-ratio rank gap of the extraction (NaN when not applicable),
/// iteration count, and wall time in seconds.
///
/// # Safety
/// `r` must be a live handle; out-pointers may be null to skip a field.
#[no_mangle]
pub unsafe extern "C" fn polyopf_report_diagnostics(
    r: *const PolyopfReport,
    rank_gap: *mut f64,
    iterations: *mut u32,
    wall_time: *mut f64,
) -> PolyopfCode {
    guard(|| {
        let rep = match report(r) {
            Ok(rep) => rep,
            Err(c) => return c,
        };
        if !rank_gap.is_null() {
            *rank_gap = rep.output.report.rank_gap;
        }
        if !iterations.is_null() {
            *iterations = rep.output.report.iterations as u32;
        }
        if !wall_time.is_null() {
            *wall_time = rep.output.report.wall_time;
        }
        PolyopfCode::PolyopfCodeOk
    })
}

/// Number of entries in the extracted voltage vector `[Re V; Im V]`, or 0
/// when no point was extracted.
///
/// # Safety
/// `r` must be a live handle from `polyopf_solve`.
#[no_mangle]
pub unsafe extern "C" fn polyopf_report_solution_len(
    r: *const PolyopfReport,
    out: *mut usize,
) -> PolyopfCode {
    guard(|| {
        let rep = match report(r) {
            Ok(rep) => rep,
            Err(c) => return c,
        };
        if out.is_null() {
            set_error("null out pointer");
            return PolyopfCode::PolyopfCodeNullArgument;
        }
        *out = rep.output.report.extracted_x.as_ref().map_or(0, |x| x.len());
        PolyopfCode::PolyopfCodeOk
    })
}

/// Copies the extracted voltage vector into `buf` (capacity `len`).
///
/// # Safety
/// `r` must be a live handle; `buf` must point to at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn polyopf_report_solution(
    r: *const PolyopfReport,
    buf: *mut f64,
    len: usize,
) -> PolyopfCode {
    guard(|| {
        let rep = match report(r) {
            Ok(rep) => rep,
            Err(c) => return c,
        };
        let x = match &rep.output.report.extracted_x {
            Some(x) => x,
            None => {
                set_error("no extracted point in this report");
                return PolyopfCode::PolyopfCodeConfig;
            }
        };
        if buf.is_null() {
            set_error("null buffer");
            return PolyopfCode::PolyopfCodeNullArgument;
        }
        if len < x.len() {
            set_error(&format!("buffer of {len} < required {}", x.len()));
            return PolyopfCode::PolyopfCodeBufferTooSmall;
        }
        ptr::copy_nonoverlapping(x.as_ptr(), buf, x.len());
        PolyopfCode::PolyopfCodeOk
    })
}

/// Serializes the report as JSON (same schema as the CLI). The returned
/// string is owned by the caller and must be released with
/// `polyopf_string_free`.
///
/// # Safety
/// `r` must be a live handle from `polyopf_solve`.
#[no_mangle]
pub unsafe extern "C" fn polyopf_report_json(
    r: *const PolyopfReport,
    out: *mut *mut c_char,
) -> PolyopfCode {
    guard(|| {
        let rep = match report(r) {
            Ok(rep) => rep,
            Err(c) => return c,
        };
        if out.is_null() {
            set_error("null out pointer");
            return PolyopfCode::PolyopfCodeNullArgument;
        }
        let json = polyopf::run::render_json(&rep.config, &rep.output);
        *out = CString::new(json).unwrap().into_raw();
        PolyopfCode::PolyopfCodeOk
    })
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn polyopf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases a report handle. Null is a no-op.
///
/// # Safety
/// `r` must have come from `polyopf_solve` and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn polyopf_report_free(r: *mut PolyopfReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    #[test]
    fn solve_and_read_back() {
        let case = CString::new("WB2").unwrap();
        let ov = CString::new("V2max=0.976").unwrap();
        let ovs = [ov.as_ptr()];
        let method = CString::new("sparse").unwrap();
        let mut handle: *mut PolyopfReport = ptr::null_mut();
        let code = unsafe {
            polyopf_solve(
                case.as_ptr(),
                ovs.as_ptr(),
                1,
                ptr::null(),
                method.as_ptr(),
                1,
                0.0,
                0,
                0.0,
                &mut handle,
            )
        };
        assert!(code == PolyopfCode::PolyopfCodeOk, "{:?}", unsafe {
            CStr::from_ptr(polyopf_last_error()).to_str()
        });
        let mut bound = 0.0;
        let mut status = PolyopfStatus::PolyopfStatusSolverFailure;
        unsafe {
            assert!(polyopf_report_bound(handle, &mut bound) == PolyopfCode::PolyopfCodeOk);
            assert!(polyopf_report_status(handle, &mut status) == PolyopfCode::PolyopfCodeOk);
        }
        assert!((bound - 905.76).abs() <= 5e-3 * 905.76, "{bound}");
        assert!(status == PolyopfStatus::PolyopfStatusGlobalCertified);
        let mut n = 0usize;
        unsafe {
            assert!(polyopf_report_solution_len(handle, &mut n) == PolyopfCode::PolyopfCodeOk);
        }
        assert_eq!(n, 4);
        let mut buf = vec![0.0; n];
        unsafe {
            assert!(
                polyopf_report_solution(handle, buf.as_mut_ptr(), n) == PolyopfCode::PolyopfCodeOk
            );
        }
        assert!(buf.iter().any(|v| v.abs() > 0.5));
        let mut json: *mut c_char = ptr::null_mut();
        unsafe {
            assert!(polyopf_report_json(handle, &mut json) == PolyopfCode::PolyopfCodeOk);
            let text = CStr::from_ptr(json).to_str().unwrap().to_string();
            polyopf_string_free(json);
            assert!(text.contains("\"schema_version\""));
            polyopf_report_free(handle);
        }
    }

    #[test]
    fn bad_inputs_produce_codes_not_crashes() {
        let mut handle: *mut PolyopfReport = ptr::null_mut();
        let code = unsafe {
            polyopf_solve(
                ptr::null(),
                ptr::null(),
                0,
                ptr::null(),
                ptr::null(),
                0,
                0.0,
                0,
                0.0,
                &mut handle,
            )
        };
        assert!(code == PolyopfCode::PolyopfCodeNullArgument);

        let case = CString::new("NOPE42").unwrap();
        let code = unsafe {
            polyopf_solve(
                case.as_ptr(),
                ptr::null(),
                0,
                ptr::null(),
                ptr::null(),
                0,
                0.0,
                0,
                0.0,
                &mut handle,
            )
        };
        assert!(code == PolyopfCode::PolyopfCodeConfig);
        let msg = unsafe { CStr::from_ptr(polyopf_last_error()).to_str().unwrap() };
        assert!(msg.contains("NOPE42"), "{msg}");

        unsafe {
            polyopf_report_free(ptr::null_mut());
            polyopf_string_free(ptr::null_mut());
        }
        let mut bound = 0.0;
        let code = unsafe { polyopf_report_bound(ptr::null(), &mut bound) };
        assert!(code == PolyopfCode::PolyopfCodeNullArgument);
    }
}
