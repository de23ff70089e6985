//! C ABI for the browsetrace pipeline.
//!
//! Every function returns a [`BtStatus`]. On failure a message is stored
//! per thread and can be read with [`bt_last_error`]. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`
//! function. Strings returned through `char **` out-parameters are released
//! with [`bt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use browsetrace::event::{hash_url, EventRecord};
use browsetrace::io;
use browsetrace::metrics::{idle, parallel};
use browsetrace::navgraph::{build_navtree, export_navtree, NavFormat};
use browsetrace::pipeline::{self, PipelineConfig, PipelineError, UserSessions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    NoEvents = 5,
    NotFound = 6,
    DataError = 7,
    Panic = 8,
}

/// Event records in time order.
pub struct BtEventLog {
    events: Vec<EventRecord>,
}

/// Sessions reconstructed from a log, grouped by user.
pub struct BtAnalysis {
    users: UserSessions,
}

/// Cleaning counters.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct BtCleaningCounts {
    pub events_in: u64,
    pub events_out: u64,
    pub duplicates_removed: u64,
    pub sessions_closed_by_estimate: u64,
    pub windows_closed_by_estimate: u64,
    pub orphans_quarantined: u64,
}

/// Parallel-browsing summary of one user. Undefined values are NaN.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct BtParallelSummary {
    pub mean_windows: f64,
    pub median_tabs: f64,
    /// Share of time with at least 2, 4, 8 and 16 open tabs.
    pub tab_share_at_least: [f64; 4],
    pub never_visible_fraction: f64,
    pub reuse_ratio: f64,
    pub reuse_bound: f64,
}

/// Idle totals over all sessions of one user, in milliseconds.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct BtIdleTotals {
    pub n_sessions: u64,
    pub session_ms: i64,
    pub explicit_idle_ms: i64,
    pub implicit_idle_ms: i64,
}

/// Report settings. `thresholds_ms` may be NULL for the defaults;
/// `top_users` 0 keeps every user.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BtReportConfig {
    pub input: *const c_char,
    pub output: *const c_char,
    pub thresholds_ms: *const i64,
    pub n_thresholds: usize,
    pub top_users: usize,
    pub top_domains: usize,
    pub common_pct: f64,
    pub strict_focus: bool,
    pub jobs: usize,
}

/// Four lowercase-hex HMAC-SHA256 digests, NUL-terminated.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BtUrlDigests {
    pub h_domain: [c_char; 65],
    pub h_subdomain: [c_char; 65],
    pub h_path: [c_char; 65],
    pub h_full: [c_char; 65],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BtStatus, msg: impl Into<String>) -> BtStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> BtStatus) -> BtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(BtStatus::Panic, "internal panic"))
}

fn pipeline_status(e: &PipelineError) -> BtStatus {
    match e {
        PipelineError::NoEvents => BtStatus::NoEvents,
        PipelineError::Config(_) => BtStatus::InvalidArgument,
        PipelineError::Read(browsetrace::io::ReadError::Parse { .. }) => BtStatus::ParseError,
        _ if e.exit_code() == 3 => BtStatus::IoError,
        _ => BtStatus::DataError,
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, BtStatus> {
    if p.is_null() {
        return Err(fail(BtStatus::NullPointer, "path is NULL"));
    }
    // SAFETY: caller passes a NUL-terminated string.
    match unsafe { CStr::from_ptr(p) }.to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(BtStatus::InvalidArgument, "path is not UTF-8")),
    }
}

fn nan(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn bt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn bt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn bt_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: allocated by CString::into_raw in this crate.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Reads a log file or a directory of log files.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bt_log_from_path(path: *const c_char, out: *mut *mut BtEventLog) -> BtStatus {
    guard(|| {
        if out.is_null() {
            return fail(BtStatus::NullPointer, "out is NULL");
        }
        // SAFETY: forwarded caller contract.
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match pipeline::read_input(&path) {
            Ok(events) => {
                // SAFETY: checked non-null.
                unsafe { *out = Box::into_raw(Box::new(BtEventLog { events })) };
                BtStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// Parses NDJSON records from memory. An empty buffer yields an empty log.
///
/// # Safety
/// `data` must point to `len` readable bytes (or be NULL with `len` 0);
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bt_log_from_buffer(data: *const u8, len: usize, out: *mut *mut BtEventLog) -> BtStatus {
    guard(|| {
        if out.is_null() || (data.is_null() && len > 0) {
            return fail(BtStatus::NullPointer, "data or out is NULL");
        }
        let bytes = if len == 0 {
            &[][..]
        } else {
            // SAFETY: caller guarantees `len` readable bytes.
            unsafe { std::slice::from_raw_parts(data, len) }
        };
        match io::parse_lines(bytes) {
            Ok(mut events) => {
                browsetrace::event::sort_by_time(&mut events);
                // SAFETY: checked non-null.
                unsafe { *out = Box::into_raw(Box::new(BtEventLog { events })) };
                BtStatus::Ok
            }
            Err((line, e)) => fail(BtStatus::ParseError, format!("line {line}: {e}")),
        }
    })
}

/// # Safety
/// `log` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn bt_log_len(log: *const BtEventLog) -> usize {
    // SAFETY: caller contract.
    unsafe { log.as_ref() }.map_or(0, |l| l.events.len())
}

/// Cleans the log in place. `top_users` 0 keeps every user; `counts` may
/// be NULL.
///
/// # Safety
/// `log` must be a live handle; `counts` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn bt_log_clean(
    log: *mut BtEventLog,
    top_users: usize,
    counts: *mut BtCleaningCounts,
) -> BtStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(log) = (unsafe { log.as_mut() }) else {
            return fail(BtStatus::NullPointer, "log is NULL");
        };
        let top = (top_users > 0).then_some(top_users);
        match pipeline::clean_events(std::mem::take(&mut log.events), top) {
            Ok(c) => {
                // SAFETY: caller contract.
                if let Some(out) = unsafe { counts.as_mut() } {
                    let r = &c.report;
                    *out = BtCleaningCounts {
                        events_in: r.events_in as u64,
                        events_out: r.events_out as u64,
                        duplicates_removed: r.duplicates_removed as u64,
                        sessions_closed_by_estimate: r.sessions_closed_by_estimate as u64,
                        windows_closed_by_estimate: r.windows_closed_by_estimate as u64,
                        orphans_quarantined: r.orphans_quarantined as u64,
                    };
                }
                log.events = c.events;
                BtStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `log` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn bt_log_free(log: *mut BtEventLog) {
    if !log.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(log) });
    }
}

/// Reconstructs sessions. The log stays valid.
///
/// # Safety
/// `log` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bt_analyze(log: *const BtEventLog, out: *mut *mut BtAnalysis) -> BtStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(log) = (unsafe { log.as_ref() }) else {
            return fail(BtStatus::NullPointer, "log is NULL");
        };
        if out.is_null() {
            return fail(BtStatus::NullPointer, "out is NULL");
        }
        if log.events.is_empty() {
            return fail(BtStatus::NoEvents, "no events");
        }
        let (users, _) = pipeline::sessionize(&log.events);
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(BtAnalysis { users })) };
        BtStatus::Ok
    })
}

/// # Safety
/// `a` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn bt_analysis_user_count(a: *const BtAnalysis) -> usize {
    // SAFETY: caller contract.
    unsafe { a.as_ref() }.map_or(0, |a| a.users.len())
}

/// User id at `index`, users ascending.
///
/// # Safety
/// `a` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bt_analysis_user_id(a: *const BtAnalysis, index: usize, out: *mut u64) -> BtStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (Some(a), Some(out)) = (unsafe { a.as_ref() }, unsafe { out.as_mut() }) else {
            return fail(BtStatus::NullPointer, "analysis or out is NULL");
        };
        match a.users.keys().nth(index) {
            Some(u) => {
                *out = *u;
                BtStatus::Ok
            }
            None => fail(BtStatus::NotFound, format!("user index {index} out of range")),
        }
    })
}

/// Number of sessions of `user`, 0 when unknown.
///
/// # Safety
/// `a` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn bt_analysis_session_count(a: *const BtAnalysis, user: u64) -> usize {
    // SAFETY: caller contract.
    unsafe { a.as_ref() }.and_then(|a| a.users.get(&user)).map_or(0, Vec::len)
}

/// # Safety
/// `a` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bt_analysis_parallel(
    a: *const BtAnalysis,
    user: u64,
    out: *mut BtParallelSummary,
) -> BtStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (Some(a), Some(out)) = (unsafe { a.as_ref() }, unsafe { out.as_mut() }) else {
            return fail(BtStatus::NullPointer, "analysis or out is NULL");
        };
        let Some(sessions) = a.users.get(&user) else {
            return fail(BtStatus::NotFound, format!("unknown user {user}"));
        };
        let s = parallel::summarize(sessions);
        *out = BtParallelSummary {
            mean_windows: nan(s.mean_windows),
            median_tabs: nan(s.median_tabs),
            tab_share_at_least: s.tab_share_at_least,
            never_visible_fraction: s.never_visible_fraction,
            reuse_ratio: nan(s.reuse.as_ref().map(|r| r.ratio)),
            reuse_bound: nan(s.reuse.as_ref().map(|r| r.lower_bound)),
        };
        BtStatus::Ok
    })
}

/// Sums over `user`'s sessions; implicit idle uses `threshold_ms`.
///
/// # Safety
/// `a` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bt_analysis_idle(
    a: *const BtAnalysis,
    user: u64,
    threshold_ms: i64,
    out: *mut BtIdleTotals,
) -> BtStatus {
    guard(|| {
        // SAFETY: caller contract.
        let (Some(a), Some(out)) = (unsafe { a.as_ref() }, unsafe { out.as_mut() }) else {
            return fail(BtStatus::NullPointer, "analysis or out is NULL");
        };
        if threshold_ms < 1000 {
            return fail(BtStatus::InvalidArgument, format!("threshold {threshold_ms} ms is below 1000 ms"));
        }
        let Some(sessions) = a.users.get(&user) else {
            return fail(BtStatus::NotFound, format!("unknown user {user}"));
        };
        *out = sessions.iter().fold(BtIdleTotals::default(), |t, s| BtIdleTotals {
            n_sessions: t.n_sessions + 1,
            session_ms: t.session_ms + s.length(),
            explicit_idle_ms: t.explicit_idle_ms + idle::explicit_idle(s),
            implicit_idle_ms: t.implicit_idle_ms + idle::implicit_idle(s, threshold_ms),
        });
        BtStatus::Ok
    })
}

/// Navigation tree of one session as Graphviz DOT (`edge_list` false) or
/// the line-oriented edge list.
///
/// # Safety
/// `a` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bt_analysis_navtree(
    a: *const BtAnalysis,
    user: u64,
    session: u64,
    edge_list: bool,
    out: *mut *mut c_char,
) -> BtStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(a) = (unsafe { a.as_ref() }) else {
            return fail(BtStatus::NullPointer, "analysis is NULL");
        };
        if out.is_null() {
            return fail(BtStatus::NullPointer, "out is NULL");
        }
        let Some(s) = a.users.get(&user).and_then(|ss| ss.iter().find(|s| s.session_id == session)) else {
            return fail(BtStatus::NotFound, format!("no session {session} for user {user}"));
        };
        let format = if edge_list { NavFormat::EdgeList } else { NavFormat::Dot };
        let bytes = export_navtree(&build_navtree(s), format);
        match CString::new(bytes) {
            Ok(c) => {
                // SAFETY: checked non-null.
                unsafe { *out = c.into_raw() };
                BtStatus::Ok
            }
            Err(_) => fail(BtStatus::DataError, "navtree contains NUL"),
        }
    })
}

/// # Safety
/// `a` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn bt_analysis_free(a: *mut BtAnalysis) {
    if !a.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(a) });
    }
}

/// Hashes `url` under `key` at the four URL levels.
///
/// # Safety
/// `url` must be NUL-terminated; `key` must point to `key_len` bytes;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bt_hash_url(
    url: *const c_char,
    key: *const u8,
    key_len: usize,
    out: *mut BtUrlDigests,
) -> BtStatus {
    guard(|| {
        if url.is_null() || out.is_null() || (key.is_null() && key_len > 0) {
            return fail(BtStatus::NullPointer, "url, key or out is NULL");
        }
        // SAFETY: caller contract.
        let Ok(url) = unsafe { CStr::from_ptr(url) }.to_str() else {
            return fail(BtStatus::InvalidArgument, "url is not UTF-8");
        };
        let key = if key_len == 0 {
            &[][..]
        } else {
            // SAFETY: caller contract.
            unsafe { std::slice::from_raw_parts(key, key_len) }
        };
        match hash_url(url, key) {
            Ok(r) => {
                let copy = |s: &str| {
                    let mut buf = [0 as c_char; 65];
                    for (d, b) in buf.iter_mut().zip(s.bytes().take(64)) {
                        *d = b as c_char;
                    }
                    buf
                };
                // SAFETY: checked non-null.
                unsafe {
                    *out = BtUrlDigests {
                        h_domain: copy(&r.h_domain),
                        h_subdomain: copy(&r.h_subdomain),
                        h_path: copy(&r.h_path),
                        h_full: copy(&r.h_full),
                    }
                };
                BtStatus::Ok
            }
            Err(e) => fail(BtStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs the full report into `config->output`.
///
/// # Safety
/// `config` must point to a valid [`BtReportConfig`] whose pointers obey
/// their documented contracts.
#[no_mangle]
pub unsafe extern "C" fn bt_run_report(config: *const BtReportConfig) -> BtStatus {
    guard(|| {
        // SAFETY: caller contract.
        let Some(c) = (unsafe { config.as_ref() }) else {
            return fail(BtStatus::NullPointer, "config is NULL");
        };
        // SAFETY: forwarded caller contract.
        let (input, output) = match unsafe { (path_arg(c.input), path_arg(c.output)) } {
            (Ok(i), Ok(o)) => (i, o),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let thresholds_ms = if c.thresholds_ms.is_null() || c.n_thresholds == 0 {
            idle::DEFAULT_THRESHOLDS_MS.to_vec()
        } else {
            // SAFETY: caller contract.
            unsafe { std::slice::from_raw_parts(c.thresholds_ms, c.n_thresholds) }.to_vec()
        };
        let cfg = PipelineConfig {
            input,
            output,
            thresholds_ms,
            top_users: (c.top_users > 0).then_some(c.top_users),
            top_domains: c.top_domains,
            common_pct: c.common_pct,
            strict_focus: c.strict_focus,
            jobs: c.jobs,
            ..Default::default()
        };
        match pipeline::run_report(&cfg) {
            Ok(_) => BtStatus::Ok,
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}
