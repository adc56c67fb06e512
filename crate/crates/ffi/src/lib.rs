//! C ABI over `ceforge`. Objects cross the boundary as opaque handles that the
//! caller frees with the matching `_free` function; strings returned through
//! out-parameters are freed with `ceforge_string_free`. Every fallible call
//! returns a `CeforgeStatus` and leaves a message for `ceforge_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ceforge::approx::{gen_scenario, GenParams, Scenario};
use ceforge::audit::audit;
use ceforge::engine::{Engine, EngineError};
use ceforge::machines::{machine_from_requests, RequestSet};
use ceforge::trace::{EngineKind, Trace};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeforgeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed input or a violated input invariant.
    Parse = 3,
    /// A machine rejected a request during a run.
    LemmaViolation = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeforgeEngine {
    Single = 0,
    Dual = 1,
}

impl From<CeforgeEngine> for EngineKind {
    fn from(e: CeforgeEngine) -> Self {
        match e {
            CeforgeEngine::Single => EngineKind::Single,
            CeforgeEngine::Dual => EngineKind::Dual,
        }
    }
}

/// Opaque scenario handle.
pub struct CeforgeScenario(Scenario);

/// Opaque trace handle.
pub struct CeforgeTrace(Trace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Outcome = Result<(), (CeforgeStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> CeforgeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CeforgeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CeforgeStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, (CeforgeStatus, String)> {
    if p.is_null() {
        return Err((CeforgeStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (CeforgeStatus::InvalidUtf8, e.to_string()))
}

fn null(what: &str) -> (CeforgeStatus, String) {
    (CeforgeStatus::NullPointer, format!("null {what}"))
}

fn parse_err(e: impl ToString) -> (CeforgeStatus, String) {
    (CeforgeStatus::Parse, e.to_string())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Outcome {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(parse_err)?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_box<T>(out: *mut *mut T, v: T) -> Outcome {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ceforge_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ceforge_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_scenario_from_json(
    json: *const c_char,
    out: *mut *mut CeforgeScenario,
) -> CeforgeStatus {
    guard(|| {
        let text = read_str(json)?;
        let sc = Scenario::from_json(text).map_err(parse_err)?;
        put_box(out, CeforgeScenario(sc))
    })
}

/// Seeded random scenario with the default parameters for `stages`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_scenario_generate(
    seed: u64,
    stages: u64,
    out: *mut *mut CeforgeScenario,
) -> CeforgeStatus {
    guard(|| {
        put_box(
            out,
            CeforgeScenario(gen_scenario(seed, &GenParams::for_stages(stages))),
        )
    })
}

/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_scenario_to_json(
    scenario: *const CeforgeScenario,
    out: *mut *mut c_char,
) -> CeforgeStatus {
    guard(|| {
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        put_string(out, sc.0.to_json())
    })
}

/// Stage count stored in the scenario, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ceforge_scenario_stages(scenario: *const CeforgeScenario) -> u64 {
    scenario.as_ref().map_or(0, |s| s.0.stages)
}

/// # Safety
/// `scenario` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ceforge_scenario_free(scenario: *mut CeforgeScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs `stages` stages of an engine.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_run(
    scenario: *const CeforgeScenario,
    engine: CeforgeEngine,
    stages: u64,
    out: *mut *mut CeforgeTrace,
) -> CeforgeStatus {
    guard(|| {
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let trace = Engine::run(engine.into(), &sc.0, stages).map_err(|e| match e {
            EngineError::Machine { .. } => (CeforgeStatus::LemmaViolation, e.to_string()),
            other => parse_err(other),
        })?;
        put_box(out, CeforgeTrace(trace))
    })
}

/// # Safety
/// `jsonl` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_trace_from_jsonl(
    jsonl: *const c_char,
    out: *mut *mut CeforgeTrace,
) -> CeforgeStatus {
    guard(|| {
        let text = read_str(jsonl)?;
        put_box(
            out,
            CeforgeTrace(Trace::from_jsonl(text).map_err(parse_err)?),
        )
    })
}

/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_trace_to_jsonl(
    trace: *const CeforgeTrace,
    out: *mut *mut c_char,
) -> CeforgeStatus {
    guard(|| {
        let tr = trace.as_ref().ok_or_else(|| null("trace"))?;
        put_string(out, tr.0.to_jsonl())
    })
}

/// # Safety
/// `trace` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ceforge_trace_free(trace: *mut CeforgeTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Audits `trace` against `scenario`. Writes the JSON report to `report` and
/// whether every check passed to `pass` (either may be null).
///
/// # Safety
/// Handles must be live; non-null output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_audit(
    scenario: *const CeforgeScenario,
    trace: *const CeforgeTrace,
    report: *mut *mut c_char,
    pass: *mut bool,
) -> CeforgeStatus {
    guard(|| {
        let sc = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        let tr = trace.as_ref().ok_or_else(|| null("trace"))?;
        let r = audit(&sc.0, &tr.0);
        if !pass.is_null() {
            *pass = r.pass;
        }
        if !report.is_null() {
            put_string(report, r.to_json())?;
        }
        Ok(())
    })
}

/// Kraft-Chaitin machine for `target<TAB>length` lines; writes the
/// `codeword<TAB>output<TAB>stage` dump.
///
/// # Safety
/// `requests` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ceforge_kc(
    requests: *const c_char,
    out: *mut *mut c_char,
) -> CeforgeStatus {
    guard(|| {
        let set = RequestSet::parse(read_str(requests)?).map_err(parse_err)?;
        let m = machine_from_requests(&set)
            .map_err(|e| (CeforgeStatus::LemmaViolation, e.to_string()))?;
        put_string(out, m.dump())
    })
}
