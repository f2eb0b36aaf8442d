//! C ABI for the low-switching LSVI-UCB library.
//!
//! Conventions: all functions return either an error code (`LsStatus`) or a
//! pointer that is null on failure; the thread-local message behind
//! `ls_last_error_message` describes the most recent failure on the calling
//! thread. Handles (`LsSpec`, `LsTrace`) are opaque and must be released
//! with their matching `_free` function; strings returned by the library
//! must be released with `ls_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lowswitch::agent::{run_agent, AgentConfig, BetaSpec, Mode, RunTrace};
use lowswitch::experiment::trace_to_csv;
use lowswitch::hard_instance::{build_hard_instance, Draw, HardInstanceParams};
use lowswitch::mdp::{embed_tabular, random_linear, random_tabular, LinearMdpSpec};
use lowswitch::Error;

/// Status codes returned by fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    /// Invalid configuration or parameters.
    ConfigError = 1,
    /// Runtime invariant or numerical failure.
    RuntimeError = 2,
    /// I/O failure.
    IoError = 3,
    /// A required pointer argument was null.
    NullPointer = 4,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 5,
    /// An internal panic was caught at the boundary.
    Panic = 6,
}

/// Opaque handle to a linear MDP specification.
pub struct LsSpec(LinearMdpSpec);

/// Opaque handle to a completed run trace.
pub struct LsTrace(RunTrace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn status_of(err: &Error) -> LsStatus {
    match err.exit_code() {
        1 => LsStatus::ConfigError,
        3 => LsStatus::IoError,
        _ => LsStatus::RuntimeError,
    }
}

fn fail<T>(err: &Error) -> (LsStatus, Option<T>) {
    set_error(&err.to_string());
    (status_of(err), None)
}

/// Message describing the most recent failure on this thread; valid until
/// the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, LsStatus> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return Err(LsStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        LsStatus::InvalidUtf8
    })
}

fn guard<T>(f: impl FnOnce() -> Result<T, LsStatus>) -> Result<T, LsStatus> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(_) => {
            set_error("internal panic");
            Err(LsStatus::Panic)
        }
    }
}

fn spec_out(result: Result<LinearMdpSpec, Error>) -> *mut LsSpec {
    match result {
        Ok(spec) => Box::into_raw(Box::new(LsSpec(spec))),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Parses a spec from its JSON serialization. Returns null on failure.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn ls_spec_from_json(json: *const c_char) -> *mut LsSpec {
    guard(|| {
        let text = str_arg(json)?;
        Ok(spec_out(LinearMdpSpec::from_json(text)))
    })
    .unwrap_or(ptr::null_mut())
}

/// Seeded random tabular MDP embedded as a linear MDP. Returns null on
/// failure.
#[no_mangle]
pub extern "C" fn ls_spec_random_tabular(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    sparsity: f64,
    seed: u64,
) -> *mut LsSpec {
    guard(|| {
        Ok(spec_out(
            random_tabular(n_states, n_actions, horizon, sparsity, seed)
                .and_then(|t| embed_tabular(&t)),
        ))
    })
    .unwrap_or(ptr::null_mut())
}

/// Seeded random linear MDP. Returns null on failure.
#[no_mangle]
pub extern "C" fn ls_spec_random_linear(
    d: usize,
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    seed: u64,
) -> *mut LsSpec {
    guard(|| Ok(spec_out(random_linear(d, horizon, n_states, n_actions, seed))))
        .unwrap_or(ptr::null_mut())
}

/// Combination-lock hard instance. `h_star = 0` samples the lock depth
/// uniformly; `1 <= h_star <= h0` fixes it. Returns null on failure.
#[no_mangle]
pub extern "C" fn ls_spec_hard_instance(
    d0: usize,
    h0: usize,
    h_star: usize,
    j_star: usize,
    seed: u64,
) -> *mut LsSpec {
    guard(|| {
        let params = HardInstanceParams {
            d0,
            h0,
            h_star: if h_star == 0 {
                Draw::Sample
            } else {
                Draw::Fixed(h_star)
            },
            correct_actions: Draw::Sample,
            j_star,
            seed,
        };
        Ok(spec_out(build_hard_instance(&params)))
    })
    .unwrap_or(ptr::null_mut())
}

/// Releases a spec handle. Null is a no-op.
///
/// # Safety
/// `spec` must be a pointer returned by a `ls_spec_*` constructor, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn ls_spec_free(spec: *mut LsSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

macro_rules! deref_or {
    ($ptr:expr, $ret:expr) => {
        match $ptr.as_ref() {
            Some(r) => r,
            None => {
                set_error("null handle");
                return $ret;
            }
        }
    };
}

/// Feature dimension `d`; 0 on a null handle.
///
/// # Safety
/// `spec` must be a live spec handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_spec_dim(spec: *const LsSpec) -> usize {
    deref_or!(spec, 0).0.dim()
}

/// Horizon `H`; 0 on a null handle.
///
/// # Safety
/// `spec` must be a live spec handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_spec_horizon(spec: *const LsSpec) -> usize {
    deref_or!(spec, 0).0.horizon()
}

/// Number of states; 0 on a null handle.
///
/// # Safety
/// `spec` must be a live spec handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_spec_n_states(spec: *const LsSpec) -> usize {
    deref_or!(spec, 0).0.n_states()
}

/// Serializes a spec to its JSON format. Returns null on failure; release
/// with `ls_string_free`.
///
/// # Safety
/// `spec` must be a live spec handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_spec_to_json(spec: *const LsSpec) -> *mut c_char {
    let spec = deref_or!(spec, ptr::null_mut());
    guard(|| match spec.0.to_json() {
        Ok(json) => Ok(CString::new(json.replace('\0', " "))
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut())),
        Err(e) => {
            set_error(&e.to_string());
            Ok(ptr::null_mut())
        }
    })
    .unwrap_or(ptr::null_mut())
}

/// Agent options for `ls_run`. `beta <= 0` selects the theoretical schedule
/// scaled by `c_beta`; `mode` is 0 for low-switch, 1 for always-switch.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsAgentOptions {
    pub lambda: f64,
    pub beta: f64,
    pub c_beta: f64,
    pub p: f64,
    pub mode: u32,
    pub strict_paper: bool,
}

/// Theory-default agent options (`lambda = 1`, auto beta, `p = 0.05`).
#[no_mangle]
pub extern "C" fn ls_agent_options_default() -> LsAgentOptions {
    LsAgentOptions {
        lambda: 1.0,
        beta: 0.0,
        c_beta: 1.0,
        p: 0.05,
        mode: 0,
        strict_paper: false,
    }
}

/// Runs the agent for `episodes` episodes and stores a trace handle in
/// `out_trace` on success.
///
/// # Safety
/// `spec` must be a live spec handle; `options` and `out_trace` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ls_run(
    spec: *const LsSpec,
    options: *const LsAgentOptions,
    episodes: usize,
    seed: u64,
    out_trace: *mut *mut LsTrace,
) -> LsStatus {
    let spec = deref_or!(spec, LsStatus::NullPointer);
    let options = deref_or!(options, LsStatus::NullPointer);
    if out_trace.is_null() {
        set_error("null out_trace");
        return LsStatus::NullPointer;
    }
    let result = guard(|| {
        let mode = match options.mode {
            0 => Mode::LowSwitch,
            1 => Mode::AlwaysSwitch,
            other => {
                set_error(&format!("unknown mode {other}"));
                return Err(LsStatus::ConfigError);
            }
        };
        let config = AgentConfig {
            lambda: options.lambda,
            beta: if options.beta > 0.0 {
                BetaSpec::Fixed(options.beta)
            } else {
                BetaSpec::Auto
            },
            c_beta: options.c_beta,
            p: options.p,
            mode,
            episodes,
            strict_paper: options.strict_paper,
            recompute_every_episode: false,
            track_optimism: false,
        };
        match run_agent(&spec.0, &config, seed) {
            Ok(trace) => Ok(Box::into_raw(Box::new(LsTrace(trace)))),
            Err(e) => {
                let (status, _) = fail::<()>(&e);
                Err(status)
            }
        }
    });
    match result {
        Ok(handle) => {
            *out_trace = handle;
            LsStatus::Ok
        }
        Err(status) => {
            *out_trace = ptr::null_mut();
            status
        }
    }
}

/// Releases a trace handle. Null is a no-op.
///
/// # Safety
/// `trace` must be a pointer returned by `ls_run`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_trace_free(trace: *mut LsTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of episodes in the trace; 0 on a null handle.
///
/// # Safety
/// `trace` must be a live trace handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_trace_len(trace: *const LsTrace) -> usize {
    deref_or!(trace, 0).0.episodes.len()
}

/// Global switching cost of the run; 0 on a null handle.
///
/// # Safety
/// `trace` must be a live trace handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_trace_global_switches(trace: *const LsTrace) -> usize {
    deref_or!(trace, 0).0.global_switches
}

/// Cumulative regret after 1-based episode `episode`; NaN when out of range.
///
/// # Safety
/// `trace` must be a live trace handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_trace_cumulative_regret(
    trace: *const LsTrace,
    episode: usize,
) -> f64 {
    let trace = deref_or!(trace, f64::NAN);
    match episode.checked_sub(1).and_then(|i| trace.0.episodes.get(i)) {
        Some(rec) => rec.cumulative_regret,
        None => {
            set_error("episode out of range");
            f64::NAN
        }
    }
}

/// Realized return of 1-based episode `episode`; NaN when out of range.
///
/// # Safety
/// `trace` must be a live trace handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_trace_return(trace: *const LsTrace, episode: usize) -> f64 {
    let trace = deref_or!(trace, f64::NAN);
    match episode.checked_sub(1).and_then(|i| trace.0.episodes.get(i)) {
        Some(rec) => rec.ret,
        None => {
            set_error("episode out of range");
            f64::NAN
        }
    }
}

/// Snapshot id deployed at 1-based episode `episode`; u64::MAX when out of
/// range.
///
/// # Safety
/// `trace` must be a live trace handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_trace_snapshot_id(trace: *const LsTrace, episode: usize) -> u64 {
    let trace = deref_or!(trace, u64::MAX);
    match episode.checked_sub(1).and_then(|i| trace.0.episodes.get(i)) {
        Some(rec) => rec.snapshot_id,
        None => {
            set_error("episode out of range");
            u64::MAX
        }
    }
}

/// Renders the trace as CSV (same format as the experiment runner's files).
/// Returns null on failure; release with `ls_string_free`.
///
/// # Safety
/// `trace` must be a live trace handle or null.
#[no_mangle]
pub unsafe extern "C" fn ls_trace_to_csv(trace: *const LsTrace) -> *mut c_char {
    let trace = deref_or!(trace, ptr::null_mut());
    guard(|| {
        Ok(CString::new(trace_to_csv(&trace.0))
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut()))
    })
    .unwrap_or(ptr::null_mut())
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a pointer returned by a `*_to_json`/`*_to_csv` function, not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    unsafe fn owned_string(ptr: *mut c_char) -> String {
        assert!(!ptr.is_null());
        let s = CStr::from_ptr(ptr).to_str().unwrap().to_owned();
        ls_string_free(ptr);
        s
    }

    #[test]
    fn round_trip_spec_through_json() {
        unsafe {
            let spec = ls_spec_random_tabular(2, 2, 2, 1.0, 3);
            assert!(!spec.is_null());
            assert_eq!(ls_spec_dim(spec), 4);
            assert_eq!(ls_spec_horizon(spec), 2);
            assert_eq!(ls_spec_n_states(spec), 2);
            let json = owned_string(ls_spec_to_json(spec));
            let json_c = CString::new(json.clone()).unwrap();
            let reparsed = ls_spec_from_json(json_c.as_ptr());
            assert!(!reparsed.is_null());
            assert_eq!(owned_string(ls_spec_to_json(reparsed)), json);
            ls_spec_free(spec);
            ls_spec_free(reparsed);
        }
    }

    #[test]
    fn run_produces_consistent_trace() {
        unsafe {
            let spec = ls_spec_random_tabular(2, 2, 2, 1.0, 3);
            let mut options = ls_agent_options_default();
            options.c_beta = 0.05;
            let mut trace: *mut LsTrace = ptr::null_mut();
            let status = ls_run(spec, &options, 100, 7, &mut trace);
            assert_eq!(status, LsStatus::Ok);
            assert_eq!(ls_trace_len(trace), 100);
            let switches = ls_trace_global_switches(trace);
            assert!(switches > 0 && switches < 100);
            let final_regret = ls_trace_cumulative_regret(trace, 100);
            assert!(final_regret >= 0.0);
            assert!(ls_trace_cumulative_regret(trace, 50) <= final_regret);
            assert!(ls_trace_return(trace, 1).is_finite());
            assert_eq!(ls_trace_snapshot_id(trace, 1), 0);

            // Bit-identical rerun through the C surface.
            let mut trace2: *mut LsTrace = ptr::null_mut();
            assert_eq!(ls_run(spec, &options, 100, 7, &mut trace2), LsStatus::Ok);
            let csv_a = owned_string(ls_trace_to_csv(trace));
            let csv_b = owned_string(ls_trace_to_csv(trace2));
            assert_eq!(csv_a, csv_b);
            assert!(csv_a.starts_with("episode,return,"));
            assert_eq!(csv_a.lines().count(), 101);

            ls_trace_free(trace);
            ls_trace_free(trace2);
            ls_spec_free(spec);
        }
    }

    #[test]
    fn error_paths_set_messages() {
        unsafe {
            // Invalid construction parameters -> null + message.
            let bad = ls_spec_random_tabular(0, 2, 2, 1.0, 0);
            assert!(bad.is_null());
            let msg = CStr::from_ptr(ls_last_error_message()).to_str().unwrap();
            assert!(!msg.is_empty());

            // Malformed JSON -> null.
            let junk = CString::new("not json").unwrap();
            assert!(ls_spec_from_json(junk.as_ptr()).is_null());

            // Null arguments -> NullPointer.
            let mut trace: *mut LsTrace = ptr::null_mut();
            let options = ls_agent_options_default();
            assert_eq!(
                ls_run(ptr::null(), &options, 10, 0, &mut trace),
                LsStatus::NullPointer
            );
            assert!(ls_spec_from_json(ptr::null()).is_null());

            // Bad agent options -> ConfigError.
            let spec = ls_spec_random_tabular(2, 2, 2, 1.0, 0);
            let mut bad_options = ls_agent_options_default();
            bad_options.mode = 9;
            assert_eq!(
                ls_run(spec, &bad_options, 10, 0, &mut trace),
                LsStatus::ConfigError
            );
            bad_options.mode = 0;
            bad_options.lambda = -1.0;
            assert_eq!(
                ls_run(spec, &bad_options, 10, 0, &mut trace),
                LsStatus::ConfigError
            );
            assert!(trace.is_null());
            ls_spec_free(spec);
        }
    }

    #[test]
    fn hard_instance_constructor() {
        unsafe {
            let spec = ls_spec_hard_instance(2, 2, 1, 1, 0);
            assert!(!spec.is_null());
            assert_eq!(ls_spec_dim(spec), 8);
            assert_eq!(ls_spec_horizon(spec), 4);
            ls_spec_free(spec);
            // Sampled lock depth.
            let sampled = ls_spec_hard_instance(2, 2, 0, 1, 5);
            assert!(!sampled.is_null());
            ls_spec_free(sampled);
            // Invalid j_star.
            assert!(ls_spec_hard_instance(2, 2, 1, 7, 0).is_null());
        }
    }

    #[test]
    fn out_of_range_accessors_return_sentinels() {
        unsafe {
            let spec = ls_spec_random_linear(3, 2, 4, 2, 1);
            let options = ls_agent_options_default();
            let mut trace: *mut LsTrace = ptr::null_mut();
            assert_eq!(ls_run(spec, &options, 5, 0, &mut trace), LsStatus::Ok);
            assert!(ls_trace_cumulative_regret(trace, 0).is_nan());
            assert!(ls_trace_cumulative_regret(trace, 6).is_nan());
            assert_eq!(ls_trace_snapshot_id(trace, 99), u64::MAX);
            ls_trace_free(trace);
            ls_spec_free(spec);
        }
    }
}
