//! C ABI over the simulator.
//!
//! Scenarios and runs are opaque handles created and released through this
//! interface. Every fallible call returns an [`AcStatus`]; on failure a
//! message is available from [`ac_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::time::Instant;

use avoidance_credit::auction::{run_auction, ValuationParams};
use avoidance_credit::config::{load_config, parse_config};
use avoidance_credit::engine::{run_scenario, ControllerMode, EventRecord, ScenarioConfig, TrajectoryLog};
use avoidance_credit::output::write_run;
use avoidance_credit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidArgument = 4,
    Simulation = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcController {
    Auction = 0,
    Qp = 1,
}

/// Opaque scenario handle.
pub struct AcScenario {
    config: ScenarioConfig,
}

/// Opaque handle to a finished run.
pub struct AcRun {
    config: ScenarioConfig,
    log: TrajectoryLog,
    events: Vec<EventRecord>,
    wall_clock_seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> AcStatus {
    match e {
        Error::Io(_) => AcStatus::Io,
        Error::Simulation { .. } | Error::NonFinite(_) | Error::Uncontrollable { .. } | Error::Json(_) => {
            AcStatus::Simulation
        }
        Error::Config(_) => AcStatus::Config,
        Error::InvalidParameter(_) | Error::OutOfRange(_) | Error::Empty(_) => AcStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> AcStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

/// Run `f`, converting panics into [`AcStatus::Panic`].
fn guard(f: impl FnOnce() -> AcStatus) -> AcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            AcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, AcStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(AcStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        AcStatus::InvalidUtf8
    })
}

unsafe fn emit_scenario(config: ScenarioConfig, out: *mut *mut AcScenario) -> AcStatus {
    *out = Box::into_raw(Box::new(AcScenario { config }));
    AcStatus::Ok
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a scenario from TOML text.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ac_scenario_from_str(text: *const c_char, out: *mut *mut AcScenario) -> AcStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AcStatus::NullPointer;
        }
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_config(text) {
            Ok(c) => emit_scenario(c, out),
            Err(e) => fail(e),
        }
    })
}

/// Load a scenario file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ac_scenario_from_file(path: *const c_char, out: *mut *mut AcScenario) -> AcStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AcStatus::NullPointer;
        }
        let path = match str_arg(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match load_config(Path::new(path)) {
            Ok(c) => emit_scenario(c, out),
            Err(e) => fail(e),
        }
    })
}

/// The built-in four-agent crossing scenario.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ac_scenario_crossing(out: *mut *mut AcScenario) -> AcStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return AcStatus::NullPointer;
        }
        emit_scenario(ScenarioConfig::crossing(), out)
    })
}

/// # Safety
/// `scenario` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ac_scenario_set_controller(scenario: *mut AcScenario, controller: AcController) -> AcStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            set_error("null scenario");
            return AcStatus::NullPointer;
        };
        s.config.controller = match controller {
            AcController::Auction => ControllerMode::Auction,
            AcController::Qp => ControllerMode::Qp,
        };
        AcStatus::Ok
    })
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ac_scenario_agent_count(scenario: *const AcScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.config.agents.len())
}

/// # Safety
/// `scenario` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ac_scenario_free(scenario: *mut AcScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulate a scenario.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ac_run(scenario: *const AcScenario, out: *mut *mut AcRun) -> AcStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            set_error("null scenario or output pointer");
            return AcStatus::NullPointer;
        };
        let start = Instant::now();
        match run_scenario(&s.config) {
            Ok((log, events)) => {
                *out = Box::into_raw(Box::new(AcRun {
                    config: s.config.clone(),
                    log,
                    events,
                    wall_clock_seconds: start.elapsed().as_secs_f64(),
                }));
                AcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `run` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ac_run_step_count(run: *const AcRun) -> usize {
    run.as_ref().map_or(0, |r| r.log.rows.len())
}

/// # Safety
/// `run` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ac_run_event_count(run: *const AcRun) -> usize {
    run.as_ref().map_or(0, |r| r.events.len())
}

/// Minimum pairwise distance over the run, NaN for a null handle.
///
/// # Safety
/// `run` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ac_run_min_distance(run: *const AcRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.log.min_distance)
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, written: *mut usize) -> AcStatus {
    if !written.is_null() {
        *written = src.len();
    }
    if dst.is_null() {
        set_error("null output buffer");
        return AcStatus::NullPointer;
    }
    if len < src.len() {
        set_error(format!("buffer holds {len} values, {} needed", src.len()));
        return AcStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    AcStatus::Ok
}

/// Copy per-agent cumulative effort into `out[0..len)`. `written`, if not
/// null, receives the number of values required.
///
/// # Safety
/// `run` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ac_run_effort(run: *const AcRun, out: *mut f64, len: usize, written: *mut usize) -> AcStatus {
    guard(|| match run.as_ref() {
        Some(r) => copy_out(&r.log.effort, out, len, written),
        None => {
            set_error("null run");
            AcStatus::NullPointer
        }
    })
}

/// Copy the credits of event `index` into `out[0..len)`. Credits follow the
/// order of the event's participants, which are reported through
/// `agents_out` (0-based) when it is not null.
///
/// # Safety
/// `run` must be a live handle; `out` must point to `len` writable doubles and
/// `agents_out`, when not null, to `len` writable `size_t`s.
#[no_mangle]
pub unsafe extern "C" fn ac_run_event_credits(
    run: *const AcRun,
    index: usize,
    out: *mut f64,
    agents_out: *mut usize,
    len: usize,
    written: *mut usize,
) -> AcStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            set_error("null run");
            return AcStatus::NullPointer;
        };
        let Some(ev) = r.events.get(index) else {
            set_error(format!("event {index} out of range ({} events)", r.events.len()));
            return AcStatus::InvalidArgument;
        };
        let status = copy_out(&ev.credits, out, len, written);
        if status == AcStatus::Ok && !agents_out.is_null() {
            ptr::copy_nonoverlapping(ev.agents.as_ptr(), agents_out, ev.agents.len());
        }
        status
    })
}

/// Write trajectory.csv, events.json, summary.json and manifest.json into
/// `dir`.
///
/// # Safety
/// `run` must be a live handle and `dir` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ac_run_write(run: *const AcRun, dir: *const c_char) -> AcStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            set_error("null run");
            return AcStatus::NullPointer;
        };
        let dir = match str_arg(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match write_run(Path::new(dir), &r.config, &r.log, &r.events, r.wall_clock_seconds) {
            Ok(_) => AcStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `run` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ac_run_free(run: *mut AcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Standalone auction over `count` bidders with bases `alpha[i]` and
/// encounter counts `n[i]`. Credits and payments are written to arrays of
/// length `count`; `iterations` and `converged` may be null.
///
/// # Safety
/// `alpha`, `n`, `credits` and `payments` must each point to `count` valid
/// elements.
#[no_mangle]
pub unsafe extern "C" fn ac_auction(
    alpha: *const f64,
    n: *const u32,
    count: usize,
    gamma: f64,
    k: f64,
    eps: f64,
    grid_step: f64,
    max_rounds: usize,
    credits: *mut f64,
    payments: *mut f64,
    iterations: *mut usize,
    converged: *mut bool,
) -> AcStatus {
    guard(|| {
        if alpha.is_null() || n.is_null() || credits.is_null() || payments.is_null() {
            set_error("null array argument");
            return AcStatus::NullPointer;
        }
        let alpha = std::slice::from_raw_parts(alpha, count);
        let n = std::slice::from_raw_parts(n, count);
        let vals = match alpha
            .iter()
            .zip(n)
            .map(|(&a, &ni)| ValuationParams::new(a, gamma, k, ni))
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(v) => v,
            Err(e) => return fail(e),
        };
        match run_auction(&vals, eps, grid_step, max_rounds) {
            Ok(o) => {
                ptr::copy_nonoverlapping(o.credits.as_ptr(), credits, count);
                ptr::copy_nonoverlapping(o.payments.as_ptr(), payments, count);
                if !iterations.is_null() {
                    *iterations = o.iterations;
                }
                if !converged.is_null() {
                    *converged = o.converged;
                }
                AcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
