//! C ABI over the `hybrid-sqp` solver.
//!
//! Configurations and reports are opaque heap handles; every handle returned
//! by this library must be released with its matching `*_free`. Functions
//! that can fail return an [`HsqpStatus`] and leave a message retrievable with
//! [`hsqp_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hybrid_sqp::harness::{run_solve, ExperimentConfig};
use hybrid_sqp::schur::{exact_step, QpData};
use hybrid_sqp::sqp::{SolveReport, Termination};
use hybrid_sqp::Error;
use nalgebra::{DMatrix, DVector};

/// Return codes shared by all fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsqpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    DimensionMismatch = 4,
    NumericalFailure = 5,
    /// The solve ran but ended with a failing termination; the report is still returned.
    SolverFailure = 6,
    BufferTooSmall = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsqpTermination {
    Converged = 0,
    MuFloor = 1,
    IterCap = 2,
    LineSearchFailure = 3,
    NonDescent = 4,
    SolverFailure = 5,
}

impl From<Termination> for HsqpTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::Converged => Self::Converged,
            Termination::MuFloor => Self::MuFloor,
            Termination::IterCap => Self::IterCap,
            Termination::LineSearchFailure => Self::LineSearchFailure,
            Termination::NonDescent => Self::NonDescent,
            Termination::SolverFailure => Self::SolverFailure,
        }
    }
}

/// Opaque experiment configuration.
pub struct HsqpConfig(ExperimentConfig);

/// Opaque result of one solve.
pub struct HsqpReport(SolveReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> HsqpStatus {
    match e {
        Error::Config(_) => HsqpStatus::InvalidConfig,
        Error::Dimension { .. } => HsqpStatus::DimensionMismatch,
        Error::Io(_) | Error::Csv(_) => HsqpStatus::Io,
        _ => HsqpStatus::NumericalFailure,
    }
}

struct Fail(HsqpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, turning errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<HsqpStatus, Fail>) -> HsqpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HsqpStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(HsqpStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(HsqpStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn config_mut<'a>(cfg: *mut HsqpConfig) -> Result<&'a mut ExperimentConfig, Fail> {
    non_null(cfg, "config")?;
    Ok(&mut (*cfg).0)
}

unsafe fn report_ref<'a>(report: *const HsqpReport) -> Option<&'a SolveReport> {
    report.as_ref().map(|r| &r.0)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hsqp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failing call on this thread, or NULL. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn hsqp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default configuration (HIV problem, exact backend).
#[no_mangle]
pub extern "C" fn hsqp_config_default() -> *mut HsqpConfig {
    Box::into_raw(Box::new(HsqpConfig(ExperimentConfig::default())))
}

/// Parses a TOML experiment document into `*out`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsqp_config_from_toml(
    toml: *const c_char,
    out: *mut *mut HsqpConfig,
) -> HsqpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(toml, "toml")?;
        let cfg = ExperimentConfig::from_toml_str(text)?;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(HsqpConfig(cfg)));
        Ok(HsqpStatus::Ok)
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hsqp_config_free(cfg: *mut HsqpConfig) {
    if !cfg.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(cfg))));
    }
}

/// Sets the problem: `hiv` or `toy:<name>`.
///
/// # Safety
/// `cfg` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hsqp_config_set_problem(
    cfg: *mut HsqpConfig,
    name: *const c_char,
) -> HsqpStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        let name = read_str(name, "name")?;
        c.problem.name = name.to_string();
        c.problem.selector()?;
        Ok(HsqpStatus::Ok)
    })
}

/// Sets the step backend: `exact`, `noisy:<eps>` or `quantum`.
///
/// # Safety
/// `cfg` must be a live handle and `kind` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hsqp_config_set_solver(
    cfg: *mut HsqpConfig,
    kind: *const c_char,
) -> HsqpStatus {
    guard(|| {
        let c = config_mut(cfg)?;
        let kind = read_str(kind, "kind")?;
        c.solver.kind = kind.to_string();
        c.solver.selector()?;
        Ok(HsqpStatus::Ok)
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hsqp_config_set_seed(cfg: *mut HsqpConfig, seed: u64) -> HsqpStatus {
    guard(|| {
        config_mut(cfg)?.seed = seed;
        Ok(HsqpStatus::Ok)
    })
}

/// Runs one solve. On `Ok` or `SolverFailure` `*out` holds a report that the
/// caller must free; on other codes it is NULL.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsqp_solve(
    cfg: *const HsqpConfig,
    out: *mut *mut HsqpReport,
) -> HsqpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(cfg, "config")?;
        let report = run_solve(&(*cfg).0)?.report;
        let status = if report.termination.is_success() {
            HsqpStatus::Ok
        } else {
            set_error(
                report
                    .message
                    .clone()
                    .unwrap_or_else(|| report.termination.to_string()),
            );
            HsqpStatus::SolverFailure
        };
        *out = Box::into_raw(Box::new(HsqpReport(report)));
        Ok(status)
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn hsqp_report_free(report: *mut HsqpReport) {
    if !report.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(report))));
    }
}

/// Termination reason; `SolverFailure` for a NULL handle.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hsqp_report_termination(report: *const HsqpReport) -> HsqpTermination {
    report_ref(report).map_or(HsqpTermination::SolverFailure, |r| r.termination.into())
}

/// Accepted steps; 0 for a NULL handle.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hsqp_report_iterations(report: *const HsqpReport) -> usize {
    report_ref(report).map_or(0, |r| r.iterations())
}

/// Objective at the final iterate; NaN for a NULL handle.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hsqp_report_objective(report: *const HsqpReport) -> f64 {
    report_ref(report).map_or(f64::NAN, |r| r.last().objective)
}

/// Length of the final decision vector; 0 for a NULL handle.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn hsqp_report_solution_len(report: *const HsqpReport) -> usize {
    report_ref(report).map_or(0, |r| r.final_z.len())
}

/// Copies the final decision vector into `buf[0..len]`.
///
/// # Safety
/// `report` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hsqp_report_solution(
    report: *const HsqpReport,
    buf: *mut f64,
    len: usize,
) -> HsqpStatus {
    guard(|| {
        let r = report_ref(report)
            .ok_or_else(|| Fail(HsqpStatus::NullPointer, "`report` is null".into()))?;
        non_null(buf, "buf")?;
        let z = r.final_z.as_slice();
        if len < z.len() {
            return Err(Fail(
                HsqpStatus::BufferTooSmall,
                format!("buffer holds {len} values, solution has {}", z.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, z.len()).copy_from_slice(z);
        Ok(HsqpStatus::Ok)
    })
}

/// Exact solve of `[Q Aᵀ; A 0][dz; λ] = [−g; r]` by Schur elimination.
/// Matrices are column-major: `q` is `n×n`, `a` is `m×n`.
///
/// # Safety
/// Every pointer must be valid for the lengths implied by `n` and `m`.
#[no_mangle]
pub unsafe extern "C" fn hsqp_exact_step(
    n: usize,
    m: usize,
    q: *const f64,
    a: *const f64,
    g: *const f64,
    r: *const f64,
    dz: *mut f64,
    lambda: *mut f64,
) -> HsqpStatus {
    guard(|| {
        for (p, name) in [(q, "q"), (a, "a"), (g, "g"), (r, "r")] {
            non_null(p, name)?;
        }
        non_null(dz, "dz")?;
        non_null(lambda, "lambda")?;
        let slice = |p: *const f64, len: usize| std::slice::from_raw_parts(p, len);
        let qp = QpData::new(
            DMatrix::from_column_slice(n, n, slice(q, n * n)),
            DMatrix::from_column_slice(m, n, slice(a, m * n)),
            DVector::from_column_slice(slice(g, n)),
            DVector::from_column_slice(slice(r, m)),
        )?;
        let sol = exact_step(&qp)?;
        std::slice::from_raw_parts_mut(dz, n).copy_from_slice(sol.dz.as_slice());
        std::slice::from_raw_parts_mut(lambda, m).copy_from_slice(sol.lambda.as_slice());
        Ok(HsqpStatus::Ok)
    })
}
