//! C interface to flowmine.
//!
//! Objects are opaque handles created by `fm_*_parse` / `fm_mine` /
//! `fm_generate` and released with the matching `fm_*_free`. Every fallible
//! call returns an `FmStatus`; on failure `fm_last_error_message` describes
//! the most recent error on the calling thread. Strings returned through
//! `char **` out-parameters must be released with `fm_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flowmine::eval::{acceptance_ratio, Strategy};
use flowmine::flowsim::{generate, parse_flowspec, GenConfig};
use flowmine::fsa::Fsa;
use flowmine::message::{parse_message_table, MessageTable};
use flowmine::pipeline::{mine, MineConfig, WindowMode};
use flowmine::trace::{parse_trace, serialize_trace, Trace};

/// Pass as `FmMineOptions::window` to search the smallest feasible window.
pub const FM_WINDOW_AUTO: i32 = -1;
/// Pass as `FmMineOptions::window` to count edge supports without a window.
pub const FM_WINDOW_OFF: i32 = -2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    Infeasible = 5,
    Panic = 6,
}

pub struct FmTable(MessageTable);

pub struct FmTrace(Trace);

pub struct FmModel(Fsa);

/// Mining knobs. Zero for `sz`, `top` or `max_window` keeps the default.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FmMineOptions {
    /// `FM_WINDOW_AUTO`, `FM_WINDOW_OFF`, or a window size >= 0.
    pub window: i32,
    pub max_window: u32,
    pub sz: u32,
    pub top: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type FfiResult<T> = Result<T, (FmStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FmStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((FmStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (FmStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| (FmStatus::NullArgument, format!("{what} is NULL")))
}

fn parse_err(e: impl std::fmt::Display) -> (FmStatus, String) {
    (FmStatus::ParseError, e.to_string())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

static EMPTY_TABLE: std::sync::OnceLock<MessageTable> = std::sync::OnceLock::new();

unsafe fn table_or_empty<'a>(t: *const FmTable) -> &'a MessageTable {
    match t.as_ref() {
        Some(t) => &t.0,
        None => EMPTY_TABLE.get_or_init(MessageTable::new),
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn fm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a message table (`<index> (<src>:<dest>:<cmd>)` per line).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_table_parse(text: *const c_char, out: *mut *mut FmTable) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = parse_message_table(cstr(text, "text")?).map_err(parse_err)?;
        *out = Box::into_raw(Box::new(FmTable(t)));
        Ok(())
    })
}

/// # Safety
/// `table` must be NULL or a handle from `fm_table_parse`, freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_table_free(table: *mut FmTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Parses a trace; `table` may be NULL when the trace uses inline triples.
///
/// # Safety
/// `text` must be a NUL-terminated string, `table` NULL or a live handle,
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fm_trace_parse(
    text: *const c_char,
    table: *const FmTable,
    out: *mut *mut FmTrace,
) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = parse_trace(cstr(text, "text")?, table_or_empty(table)).map_err(parse_err)?;
        *out = Box::into_raw(Box::new(FmTrace(t)));
        Ok(())
    })
}

/// Total message instances in the trace; 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_trace_msg_count(trace: *const FmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.msg_count())
}

/// Serializes a trace; indices are used for messages found in `table`.
///
/// # Safety
/// `trace` must be a live handle, `table` NULL or a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_trace_to_text(
    trace: *const FmTrace,
    table: *const FmTable,
    out: *mut *mut c_char,
) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let trace = trace.as_ref().ok_or((FmStatus::NullArgument, "trace is NULL".into()))?;
        *out = into_c_string(serialize_trace(&trace.0, table.as_ref().map(|t| &t.0)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_trace_free(trace: *mut FmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Mines the best model from `n` traces. `table` and `opts` may be NULL.
///
/// Returns `FM_STATUS_INFEASIBLE` when no consistent model exists under the
/// requested window.
///
/// # Safety
/// `traces` must point to `n` live trace handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fm_mine(
    traces: *const *const FmTrace,
    n: usize,
    table: *const FmTable,
    opts: *const FmMineOptions,
    out: *mut *mut FmModel,
) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if traces.is_null() || n == 0 {
            return Err((FmStatus::InvalidArgument, "no traces given".into()));
        }
        let mut owned = Vec::with_capacity(n);
        for (i, p) in std::slice::from_raw_parts(traces, n).iter().enumerate() {
            let t = p.as_ref().ok_or_else(|| (FmStatus::NullArgument, format!("traces[{i}] is NULL")))?;
            owned.push(t.0.clone());
        }
        let mut cfg = MineConfig::default();
        if let Some(o) = opts.as_ref() {
            cfg.window = match o.window {
                FM_WINDOW_AUTO => WindowMode::Auto,
                FM_WINDOW_OFF => WindowMode::Off,
                w if w >= 0 => WindowMode::Fixed(w as usize),
                w => return Err((FmStatus::InvalidArgument, format!("bad window {w}"))),
            };
            if o.max_window > 0 {
                cfg.max_window = Some(o.max_window as usize);
            }
            if o.sz > 0 {
                cfg.extract.sz = o.sz as usize;
            }
            if o.top > 0 {
                cfg.extract.top = o.top as usize;
            }
        }
        let r = mine(table_or_empty(table), &owned, &cfg).map_err(|e| {
            let status = if e.is_infeasible() { FmStatus::Infeasible } else { FmStatus::InvalidArgument };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(FmModel(r.model)));
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_from_json(json: *const c_char, out: *mut *mut FmModel) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = Fsa::from_json(cstr(json, "json")?).map_err(parse_err)?;
        *out = Box::into_raw(Box::new(FmModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_to_json(model: *const FmModel, out: *mut *mut c_char) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = model.as_ref().ok_or((FmStatus::NullArgument, "model is NULL".into()))?;
        *out = into_c_string(m.0.to_json());
        Ok(())
    })
}

/// Graphviz rendering; labels use `table` indices when a table is given.
///
/// # Safety
/// `model` must be a live handle, `table` NULL or a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_model_to_dot(
    model: *const FmModel,
    table: *const FmTable,
    out: *mut *mut c_char,
) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = model.as_ref().ok_or((FmStatus::NullArgument, "model is NULL".into()))?;
        *out = into_c_string(m.0.to_dot(table.as_ref().map(|t| &t.0)));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_model_free(model: *mut FmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Acceptance ratio of `model` on `trace`. `strategy` is one of
/// `oldest-first` (used when NULL), `newest-first`, `exhaustive` or
/// `exhaustive:N`. `accepted` may be NULL.
///
/// # Safety
/// Handles must be live; `ratio` must be valid; `accepted` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn fm_acceptance_ratio(
    model: *const FmModel,
    trace: *const FmTrace,
    strategy: *const c_char,
    ratio: *mut f64,
    accepted: *mut usize,
) -> FmStatus {
    guard(|| {
        let ratio = out_ptr(ratio, "ratio")?;
        let m = model.as_ref().ok_or((FmStatus::NullArgument, "model is NULL".into()))?;
        let t = trace.as_ref().ok_or((FmStatus::NullArgument, "trace is NULL".into()))?;
        let strategy: Strategy = if strategy.is_null() {
            Strategy::default()
        } else {
            cstr(strategy, "strategy")?.parse().map_err(|e: String| (FmStatus::InvalidArgument, e))?
        };
        let r =
            acceptance_ratio(&m.0, &t.0, strategy).map_err(|e| (FmStatus::InvalidArgument, e.to_string()))?;
        *ratio = r.ratio;
        if let Some(a) = accepted.as_mut() {
            *a = r.accepted;
        }
        Ok(())
    })
}

/// Generates a synthetic trace from a flow spec.
///
/// # Safety
/// `flowspec` must be a NUL-terminated string, `table` NULL or a live handle,
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fm_generate(
    flowspec: *const c_char,
    table: *const FmTable,
    instances_per_flow: u32,
    seed: u64,
    max_gap: u32,
    simul_prob: f64,
    out: *mut *mut FmTrace,
) -> FmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let spec = parse_flowspec(cstr(flowspec, "flowspec")?, table_or_empty(table)).map_err(parse_err)?;
        let cfg = GenConfig {
            instances_per_flow: instances_per_flow as usize,
            seed,
            max_gap: max_gap as usize,
            simul_prob,
            tag_pid: false,
        };
        let t = generate(&spec, &cfg).map_err(|e| (FmStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(FmTrace(t)));
        Ok(())
    })
}
