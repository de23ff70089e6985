//! Newline-delimited wire encoding.
//!
//! One JSON object per line with keys in canonical order:
//! `time, tz, uid, wid, sid, tid, kind` followed by the kind's payload.
//! `wid`/`tid` are omitted for kinds not scoped to a window/tab. Files start
//! with the header line [`FILE_HEADER`].

use std::fmt::Write as _;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{EventKind, EventRecord, LoadCause, UrlRef, WindowState};

pub const FILE_HEADER: &str = r#"{"v":1}"#;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("range error: {0}")]
    RangeError(String),
}

impl ParseError {
    fn schema(msg: impl Into<String>) -> Self {
        ParseError::SchemaViolation(msg.into())
    }
}

/// Encodes a record in canonical form, without the trailing newline.
pub fn serialize_event(e: &EventRecord) -> String {
    let mut out = String::with_capacity(128);
    write!(out, "{{\"time\":{},\"tz\":{},\"uid\":{}", e.time, e.tz_offset, e.user_id).unwrap();
    if let Some(wid) = e.window_id {
        write!(out, ",\"wid\":{wid}").unwrap();
    }
    write!(out, ",\"sid\":{}", e.session_id).unwrap();
    if let Some(tid) = e.tab_id {
        write!(out, ",\"tid\":{tid}").unwrap();
    }
    write!(out, ",\"kind\":\"{}\"", e.kind.name()).unwrap();
    match &e.kind {
        EventKind::SessionClose { estimated } | EventKind::WindowClose { estimated } => {
            if *estimated {
                out.push_str(",\"estimated\":true");
            }
        }
        EventKind::WindowState { state } => write!(out, ",\"state\":\"{}\"", state.as_str()).unwrap(),
        EventKind::WindowFocus { focused } => write!(out, ",\"focused\":{focused}").unwrap(),
        EventKind::TabOpen { opener: Some(o) } => write!(out, ",\"opener\":{o}").unwrap(),
        EventKind::Activity { active } => write!(out, ",\"active\":{active}").unwrap(),
        EventKind::PageLoad { url, cause, background } => {
            write!(
                out,
                ",\"url\":{{\"domain\":\"{}\",\"subdomain\":\"{}\",\"path\":\"{}\",\"full\":\"{}\"",
                url.h_domain, url.h_subdomain, url.h_path, url.h_full
            )
            .unwrap();
            if let Some(p) = &url.plaintext {
                out.push_str(",\"plain\":");
                out.push_str(&serde_json::to_string(p).expect("string serialization is infallible"));
            }
            write!(out, "}},\"cause\":\"{}\",\"bg\":{background}", cause.as_str()).unwrap();
        }
        EventKind::PageVisibility { visible } => write!(out, ",\"visible\":{visible}").unwrap(),
        EventKind::SessionStart
        | EventKind::WindowOpen
        | EventKind::TabOpen { opener: None }
        | EventKind::TabClose
        | EventKind::TabSelect => {}
    }
    out.push('}');
    out
}

fn take_i64(obj: &mut Map<String, Value>, key: &str) -> Result<i64, ParseError> {
    match obj.remove(key) {
        None => Err(ParseError::schema(format!("missing {key}"))),
        Some(v) => v.as_i64().ok_or_else(|| ParseError::schema(format!("{key} must be an integer"))),
    }
}

fn take_id(obj: &mut Map<String, Value>, key: &str) -> Result<Option<u64>, ParseError> {
    match obj.remove(key) {
        None => Ok(None),
        Some(v) => {
            v.as_u64().map(Some).ok_or_else(|| ParseError::schema(format!("{key} must be a non-negative integer")))
        }
    }
}

fn take_bool(obj: &mut Map<String, Value>, key: &str) -> Result<bool, ParseError> {
    match obj.remove(key) {
        None => Err(ParseError::schema(format!("missing {key}"))),
        Some(Value::Bool(b)) => Ok(b),
        Some(_) => Err(ParseError::schema(format!("{key} must be a boolean"))),
    }
}

fn take_str(obj: &mut Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match obj.remove(key) {
        None => Err(ParseError::schema(format!("missing {key}"))),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(ParseError::schema(format!("{key} must be a string"))),
    }
}

fn take_url(obj: &mut Map<String, Value>) -> Result<UrlRef, ParseError> {
    let mut u = match obj.remove("url") {
        None => return Err(ParseError::schema("missing url")),
        Some(Value::Object(m)) => m,
        Some(_) => return Err(ParseError::schema("url must be an object")),
    };
    let url = UrlRef {
        h_domain: take_str(&mut u, "domain")?,
        h_subdomain: take_str(&mut u, "subdomain")?,
        h_path: take_str(&mut u, "path")?,
        h_full: take_str(&mut u, "full")?,
        plaintext: match u.remove("plain") {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => return Err(ParseError::schema("url.plain must be a string")),
        },
    };
    reject_extras(&u, "url")?;
    Ok(url)
}

fn reject_extras(obj: &Map<String, Value>, ctx: &str) -> Result<(), ParseError> {
    match obj.keys().next() {
        Some(k) => Err(ParseError::schema(format!("unexpected field {k:?} in {ctx}"))),
        None => Ok(()),
    }
}

/// Decodes and fully validates one record.
pub fn parse_event(line: &[u8]) -> Result<EventRecord, ParseError> {
    let value: Value = serde_json::from_slice(line).map_err(|e| ParseError::MalformedRecord(e.to_string()))?;
    let mut obj = match value {
        Value::Object(m) => m,
        _ => return Err(ParseError::MalformedRecord("record is not an object".into())),
    };
    let time = take_i64(&mut obj, "time")?;
    let tz = take_i64(&mut obj, "tz")?;
    let tz_offset = i32::try_from(tz).map_err(|_| ParseError::RangeError(format!("tz offset {tz} out of range")))?;
    let user_id = take_id(&mut obj, "uid")?.ok_or_else(|| ParseError::schema("missing uid"))?;
    let session_id = take_id(&mut obj, "sid")?.ok_or_else(|| ParseError::schema("missing sid"))?;
    let window_id = take_id(&mut obj, "wid")?;
    let tab_id = take_id(&mut obj, "tid")?;
    let kind_name = take_str(&mut obj, "kind")?;

    let estimated = |obj: &mut Map<String, Value>| -> Result<bool, ParseError> {
        match obj.remove("estimated") {
            None => Ok(false),
            Some(Value::Bool(true)) => Ok(true),
            Some(_) => Err(ParseError::schema("estimated must be `true` when present")),
        }
    };
    let kind = match kind_name.as_str() {
        "session_start" => EventKind::SessionStart,
        "session_close" => EventKind::SessionClose { estimated: estimated(&mut obj)? },
        "window_open" => EventKind::WindowOpen,
        "window_close" => EventKind::WindowClose { estimated: estimated(&mut obj)? },
        "window_state" => {
            let s = take_str(&mut obj, "state")?;
            let state =
                WindowState::from_name(&s).ok_or_else(|| ParseError::schema(format!("unknown window state {s:?}")))?;
            EventKind::WindowState { state }
        }
        "window_focus" => EventKind::WindowFocus { focused: take_bool(&mut obj, "focused")? },
        "tab_open" => EventKind::TabOpen { opener: take_id(&mut obj, "opener")? },
        "tab_close" => EventKind::TabClose,
        "tab_select" => EventKind::TabSelect,
        "activity" => EventKind::Activity { active: take_bool(&mut obj, "active")? },
        "page_load" => {
            let url = take_url(&mut obj)?;
            let c = take_str(&mut obj, "cause")?;
            let cause = LoadCause::from_name(&c).ok_or_else(|| ParseError::schema(format!("unknown cause {c:?}")))?;
            let background = take_bool(&mut obj, "bg")?;
            EventKind::PageLoad { url, cause, background }
        }
        "page_visibility" => EventKind::PageVisibility { visible: take_bool(&mut obj, "visible")? },
        other => return Err(ParseError::schema(format!("unknown kind {other:?}"))),
    };
    reject_extras(&obj, kind_name.as_str())?;

    let record = EventRecord { time, tz_offset, user_id, window_id, session_id, tab_id, kind };
    record.validate()?;
    Ok(record)
}

/// True for the per-file version header line.
pub fn is_header(line: &[u8]) -> bool {
    line.trim_ascii() == FILE_HEADER.as_bytes()
}
