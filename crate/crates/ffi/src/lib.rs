//! C ABI over the agent runtime.
//!
//! Handles are opaque; every fallible call returns a [`StemgateStatus`] and
//! leaves a message for [`stemgate_last_error_message`] on failure. Strings
//! returned through `out` parameters are owned by the caller and must be
//! released with [`stemgate_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde_json::json;
use stemgate::cognition::{Agent, AgentConfig};
use stemgate::gateway::admin;
use stemgate::perception::Metadata;
use stemgate::profiler;
use stemgate::skills::PluginDefinition;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StemgateStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    PipelineError = 4,
    IoError = 5,
    Panic = 6,
}

/// An agent plus the runtime that drives it.
pub struct StemgateAgent {
    runtime: tokio::runtime::Runtime,
    agent: Agent,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(StemgateStatus, String);

type FfiResult<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> StemgateStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StemgateStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside stemgate");
            StemgateStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Fail(StemgateStatus::NullPointer, format!("{name} is null")));
    }
    // SAFETY: the caller passes a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Fail(StemgateStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn agent_ref<'a>(p: *mut StemgateAgent) -> FfiResult<&'a StemgateAgent> {
    // SAFETY: non-null handles come from stemgate_agent_new and are not yet freed.
    unsafe { p.as_ref() }.ok_or_else(|| Fail(StemgateStatus::NullPointer, "agent is null".into()))
}

unsafe fn write_out(out: *mut *mut c_char, value: String) -> FfiResult<()> {
    if out.is_null() {
        return Err(Fail(StemgateStatus::NullPointer, "out is null".into()));
    }
    let c = CString::new(value).map_err(|_| Fail(StemgateStatus::InvalidArgument, "output contains NUL".into()))?;
    // SAFETY: out is non-null and points to writable storage for one pointer.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Creates an agent. `config_json` may be null for defaults; otherwise it
/// is an agent configuration document.
///
/// # Safety
/// `config_json` is null or a valid C string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_new(
    config_json: *const c_char,
    out: *mut *mut StemgateAgent,
) -> StemgateStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(StemgateStatus::NullPointer, "out is null".into()));
        }
        let config: AgentConfig = if config_json.is_null() {
            AgentConfig::default()
        } else {
            let text = unsafe { read_str(config_json, "config_json") }?;
            serde_json::from_str(text).map_err(|e| Fail(StemgateStatus::InvalidArgument, format!("config: {e}")))?
        };
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| Fail(StemgateStatus::IoError, e.to_string()))?;
        let agent =
            runtime.block_on(Agent::new(config)).map_err(|e| Fail(StemgateStatus::PipelineError, e.to_string()))?;
        let handle = Box::new(StemgateAgent { runtime, agent });
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// # Safety
/// `agent` is null or a handle from [`stemgate_agent_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_free(agent: *mut StemgateAgent) {
    if !agent.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        let handle = unsafe { Box::from_raw(agent) };
        let StemgateAgent { runtime, agent } = *handle;
        runtime.block_on(agent.settle());
        drop(agent);
        runtime.shutdown_background();
    }
}

/// Runs one message through the pipeline and waits for learning to finish.
/// Writes the pipeline result as JSON.
///
/// # Safety
/// Pointers are valid; strings are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_run(
    agent: *mut StemgateAgent,
    caller_id: *const c_char,
    message: *const c_char,
    out_json: *mut *mut c_char,
) -> StemgateStatus {
    guard(|| {
        let h = unsafe { agent_ref(agent) }?;
        let caller = unsafe { read_str(caller_id, "caller_id") }?;
        let message = unsafe { read_str(message, "message") }?;
        let result = h
            .runtime
            .block_on(async {
                let r = h.agent.run(caller, message, &Metadata::new()).await;
                h.agent.settle().await;
                r
            })
            .map_err(|e| Fail(StemgateStatus::PipelineError, e.to_string()))?;
        let text = serde_json::to_string(&result).map_err(|e| Fail(StemgateStatus::PipelineError, e.to_string()))?;
        unsafe { write_out(out_json, text) }
    })
}

/// # Safety
/// Pointers are valid; strings are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_profile_json(
    agent: *mut StemgateAgent,
    caller_id: *const c_char,
    out_json: *mut *mut c_char,
) -> StemgateStatus {
    guard(|| {
        let h = unsafe { agent_ref(agent) }?;
        let caller = unsafe { read_str(caller_id, "caller_id") }?;
        unsafe { write_out(out_json, admin::profile_view(&h.agent, caller).to_string()) }
    })
}

/// # Safety
/// Pointers are valid.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_skills_json(
    agent: *mut StemgateAgent,
    out_json: *mut *mut c_char,
) -> StemgateStatus {
    guard(|| {
        let h = unsafe { agent_ref(agent) }?;
        unsafe { write_out(out_json, admin::skills_view(&h.agent).to_string()) }
    })
}

/// Registers a plugin skill; writes the stored skill as JSON.
///
/// # Safety
/// Pointers are valid; strings are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_register_plugin(
    agent: *mut StemgateAgent,
    definition_json: *const c_char,
    out_json: *mut *mut c_char,
) -> StemgateStatus {
    guard(|| {
        let h = unsafe { agent_ref(agent) }?;
        let text = unsafe { read_str(definition_json, "definition_json") }?;
        let def: PluginDefinition = serde_json::from_str(text)
            .map_err(|e| Fail(StemgateStatus::InvalidArgument, format!("definition: {e}")))?;
        let skill =
            admin::register_plugin(&h.agent, def).map_err(|e| Fail(StemgateStatus::InvalidArgument, e.to_string()))?;
        unsafe { write_out(out_json, json!(skill).to_string()) }
    })
}

/// Deletes everything held about a caller; writes the deletion counts.
///
/// # Safety
/// Pointers are valid; strings are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_forget_caller(
    agent: *mut StemgateAgent,
    caller_id: *const c_char,
    out_json: *mut *mut c_char,
) -> StemgateStatus {
    guard(|| {
        let h = unsafe { agent_ref(agent) }?;
        let caller = unsafe { read_str(caller_id, "caller_id") }?;
        let report = h.runtime.block_on(h.agent.forget_caller(caller));
        unsafe { write_out(out_json, json!(report).to_string()) }
    })
}

/// # Safety
/// Pointers are valid; strings are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn stemgate_agent_checkpoint(agent: *mut StemgateAgent, dir: *const c_char) -> StemgateStatus {
    guard(|| {
        let h = unsafe { agent_ref(agent) }?;
        let dir = unsafe { read_str(dir, "dir") }?;
        h.runtime
            .block_on(async {
                h.agent.settle().await;
                h.agent.checkpoint(Path::new(dir)).await
            })
            .map_err(|e| Fail(StemgateStatus::IoError, e.to_string()))
    })
}

/// One EMA step, `(1 - alpha) * current + alpha * signal`.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn stemgate_update_dimension(
    current: f64,
    signal: f64,
    alpha: f64,
    out: *mut f64,
) -> StemgateStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(StemgateStatus::NullPointer, "out is null".into()));
        }
        let v = profiler::update_dimension(current, signal, alpha)
            .map_err(|e| Fail(StemgateStatus::InvalidArgument, e.to_string()))?;
        // SAFETY: checked non-null above.
        unsafe { *out = v };
        Ok(())
    })
}

/// Profile confidence after `n` interactions, `n / (n + kappa)`.
#[no_mangle]
pub extern "C" fn stemgate_confidence(n: u64, kappa: f64) -> f64 {
    profiler::confidence(n, kappa)
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next stemgate call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn stemgate_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn stemgate_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by CString::into_raw in write_out.
        drop(unsafe { CString::from_raw(s) });
    }
}
