//! Declarative trace schedules.
//!
//! A schedule is a line-oriented text file. Blank lines and `#` comments
//! are ignored. Times are offsets from `epoch`, written as a bare number of
//! milliseconds or as concatenated units (`1d2h30m`, `90s`, `250ms`).
//!
//! ```text
//! epoch <ms>                      default 1577836800000 (2020-01-01T00:00Z)
//! key <text>                      HMAC key for URL digests; default derived from the seed
//! user <uid> [tz=<minutes>]
//! session <sid> <start> <end>
//! window <wid> <open> <close>
//! tab <wid> <tid> <open> <close> [opener=<tid>]
//! select <wid> <tid> <time>
//! load <wid> <tid> <time> <url> <link|bookmark|typed|reload|other> <fg|bg>
//! focus <wid> <time> <on|off>
//! state <wid> <time> <normal|minimized|maximized|fullscreen>
//! idle <start> <end>
//! ```
//!
//! `session` attaches to the last `user`; every other line attaches to the
//! last `session`. Windows start focused. A foreground load displays its
//! tab like a select does; a background load must target a tab that is not
//! displayed. The displayed tab of a window stops being displayed when it
//! closes. At equal times events apply in this order: session start, window
//! open, tab open, select, load, focus and state, idle, tab close, window
//! close, session close; within one kind, in window, tab and line order.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::event::{LoadCause, SessionId, TabId, UserId, WindowId, WindowState, MAX_TZ_OFFSET_MINUTES};

use super::SynthError;

pub const DEFAULT_EPOCH_MS: i64 = 1_577_836_800_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSchedule {
    pub epoch: i64,
    pub key: Option<String>,
    pub users: Vec<UserScript>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserScript {
    pub user_id: UserId,
    pub tz_offset: i32,
    pub sessions: Vec<SessionScript>,
}

/// All times absolute epoch milliseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionScript {
    pub session_id: SessionId,
    pub start: i64,
    pub end: i64,
    pub windows: Vec<WindowScript>,
    pub idle: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowScript {
    pub window_id: WindowId,
    pub open: i64,
    pub close: i64,
    pub tabs: Vec<TabScript>,
    pub selects: Vec<(i64, TabId)>,
    pub focus: Vec<(i64, bool)>,
    pub states: Vec<(i64, WindowState)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabScript {
    pub tab_id: TabId,
    pub open: i64,
    pub close: i64,
    pub opener: Option<TabId>,
    pub loads: Vec<LoadScript>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadScript {
    pub time: i64,
    pub url: String,
    pub cause: LoadCause,
    pub background: bool,
}

impl Default for TraceSchedule {
    fn default() -> Self {
        TraceSchedule { epoch: DEFAULT_EPOCH_MS, key: None, users: Vec::new() }
    }
}

impl WindowScript {
    pub fn tab(&self, id: TabId) -> Option<&TabScript> {
        self.tabs.iter().find(|t| t.tab_id == id)
    }
}

impl TraceSchedule {
    /// Key used for URL digests.
    pub fn hash_key(&self, seed: u64) -> Vec<u8> {
        match &self.key {
            Some(k) => k.as_bytes().to_vec(),
            None => format!("synth-{seed:016x}").into_bytes(),
        }
    }

    pub fn sessions(&self) -> impl Iterator<Item = (&UserScript, &SessionScript)> {
        self.users.iter().flat_map(|u| u.sessions.iter().map(move |s| (u, s)))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let mut uids = std::collections::BTreeSet::new();
        for u in &self.users {
            if !uids.insert(u.user_id) {
                return inconsistent(format!("duplicate user {}", u.user_id));
            }
            if u.tz_offset.abs() > MAX_TZ_OFFSET_MINUTES {
                return inconsistent(format!("user {}: tz offset {} out of range", u.user_id, u.tz_offset));
            }
            let mut prev_end = i64::MIN;
            let mut sids = std::collections::BTreeSet::new();
            for s in &u.sessions {
                if !sids.insert(s.session_id) {
                    return inconsistent(format!("user {}: duplicate session {}", u.user_id, s.session_id));
                }
                if s.start < prev_end {
                    return inconsistent(format!("session {} starts before the previous one ends", s.session_id));
                }
                prev_end = s.end;
                validate_session(s).map_err(|m| {
                    SynthError::InconsistentSchedule(format!("user {} session {}: {m}", u.user_id, s.session_id))
                })?;
            }
        }
        Ok(())
    }
}

fn inconsistent<T>(msg: String) -> Result<T, SynthError> {
    Err(SynthError::InconsistentSchedule(msg))
}

fn strictly_increasing(times: impl Iterator<Item = i64>) -> bool {
    let times: Vec<i64> = times.collect();
    times.windows(2).all(|p| p[0] < p[1])
}

fn validate_session(s: &SessionScript) -> Result<(), String> {
    if s.start <= 0 || s.start >= s.end {
        return Err(format!("bad lifespan [{}, {})", s.start, s.end));
    }
    let mut prev = s.start;
    for &(a, b) in &s.idle {
        if a < prev || a >= b || b > s.end {
            return Err(format!("idle span [{a}, {b}) out of order or outside the session"));
        }
        prev = b;
    }
    for (i, w) in s.windows.iter().enumerate() {
        if s.windows[..i].iter().any(|o| o.window_id == w.window_id) {
            return Err(format!("duplicate window {}", w.window_id));
        }
        if w.open < s.start || w.open >= w.close || w.close > s.end {
            return Err(format!("window {} lifespan [{}, {}) not inside the session", w.window_id, w.open, w.close));
        }
        validate_window(w).map_err(|m| format!("window {}: {m}", w.window_id))?;
    }
    Ok(())
}

fn validate_window(w: &WindowScript) -> Result<(), String> {
    let inside = |t: i64| w.open <= t && t < w.close;
    for (i, t) in w.tabs.iter().enumerate() {
        if w.tabs[..i].iter().any(|o| o.tab_id == t.tab_id) {
            return Err(format!("duplicate tab {}", t.tab_id));
        }
        if t.open < w.open || t.open >= t.close || t.close > w.close {
            return Err(format!("tab {} lifespan [{}, {}) not inside the window", t.tab_id, t.open, t.close));
        }
        if let Some(o) = t.opener {
            match w.tabs[..i].iter().find(|x| x.tab_id == o) {
                None => return Err(format!("tab {}: opener {o} is not an earlier tab of this window", t.tab_id)),
                Some(x) if !(x.open <= t.open && t.open < x.close) => {
                    return Err(format!("tab {}: opener {o} is not open at {}", t.tab_id, t.open))
                }
                _ => {}
            }
        }
        if !strictly_increasing(t.loads.iter().map(|l| l.time)) {
            return Err(format!("tab {}: load times must increase", t.tab_id));
        }
        if let Some(l) = t.loads.iter().find(|l| l.time < t.open || l.time >= t.close) {
            return Err(format!("tab {}: load at {} outside the tab", t.tab_id, l.time));
        }
    }
    if !strictly_increasing(w.focus.iter().map(|f| f.0)) || !strictly_increasing(w.states.iter().map(|s| s.0)) {
        return Err("focus and state times must increase".into());
    }
    if let Some(&(t, _)) = w.focus.iter().find(|f| !inside(f.0)) {
        return Err(format!("focus change at {t} outside the window"));
    }
    if let Some(&(t, _)) = w.states.iter().find(|s| !inside(s.0)) {
        return Err(format!("state change at {t} outside the window"));
    }
    let mut expect = false;
    for &(t, on) in &w.focus {
        if on != expect {
            return Err(format!("focus change at {t} does not alternate (windows start focused)"));
        }
        expect = !on;
    }

    // display actions: selects and foreground loads
    let mut display: Vec<(i64, TabId)> = w.selects.clone();
    display.extend(w.tabs.iter().flat_map(|t| t.loads.iter().filter(|l| !l.background).map(|l| (l.time, t.tab_id))));
    display.sort_unstable();
    if !strictly_increasing(display.iter().map(|d| d.0)) {
        return Err("two display changes (select or foreground load) at the same time".into());
    }
    let displayed_before = |t: i64, inclusive: bool| -> Option<TabId> {
        display
            .iter()
            .rev()
            .find(|d| if inclusive { d.0 <= t } else { d.0 < t })
            .map(|d| d.1)
            .filter(|id| w.tab(*id).is_some_and(|x| x.close > t))
    };
    for &(t, id) in &w.selects {
        let Some(tab) = w.tab(id) else {
            return Err(format!("select of unknown tab {id}"));
        };
        if !(tab.open <= t && t < tab.close) {
            return Err(format!("select of tab {id} at {t} while it is not open"));
        }
        if displayed_before(t, false) == Some(id) {
            return Err(format!("select of tab {id} at {t} which is already displayed"));
        }
    }
    for t in &w.tabs {
        for l in t.loads.iter().filter(|l| l.background) {
            if displayed_before(l.time, true) == Some(t.tab_id) {
                return Err(format!("background load at {} into displayed tab {}", l.time, t.tab_id));
            }
        }
    }
    Ok(())
}

/// Parses `1d2h30m`, `90s`, `250ms` or a bare millisecond count.
pub fn parse_duration(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let mut total: i64 = 0;
    let mut rest = s;
    while !rest.is_empty() {
        let digits = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        if digits == 0 {
            return None;
        }
        let n: i64 = rest[..digits].parse().ok()?;
        rest = &rest[digits..];
        let (unit, len) = if rest.starts_with("ms") {
            (1, 2)
        } else {
            match rest.chars().next()? {
                's' => (1_000, 1),
                'm' => (60_000, 1),
                'h' => (3_600_000, 1),
                'd' => (86_400_000, 1),
                _ => return None,
            }
        };
        total = total.checked_add(n.checked_mul(unit)?)?;
        rest = &rest[len..];
    }
    Some(total)
}

pub fn format_duration(ms: i64) -> String {
    if ms <= 0 {
        return ms.to_string();
    }
    let mut out = String::new();
    let mut rest = ms;
    for (unit, name) in [(86_400_000, "d"), (3_600_000, "h"), (60_000, "m"), (1_000, "s"), (1, "ms")] {
        if rest >= unit {
            write!(out, "{}{name}", rest / unit).unwrap();
            rest %= unit;
        }
    }
    out
}

struct Parser<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, SynthError> {
        Err(SynthError::Parse { line: self.line, reason: reason.into() })
    }

    fn field(&self, i: usize, what: &str) -> Result<&'a str, SynthError> {
        match self.fields.get(i) {
            Some(f) => Ok(f),
            None => self.err(format!("missing {what}")),
        }
    }

    fn id(&self, i: usize, what: &str) -> Result<u64, SynthError> {
        let f = self.field(i, what)?;
        f.parse().or_else(|_| self.err(format!("bad {what} {f:?}")))
    }

    fn time(&self, i: usize, epoch: i64, what: &str) -> Result<i64, SynthError> {
        let f = self.field(i, what)?;
        match parse_duration(f) {
            Some(d) => Ok(epoch + d),
            None => self.err(format!("bad {what} {f:?}")),
        }
    }

    fn arity(&self, min: usize, max: usize) -> Result<(), SynthError> {
        if self.fields.len() < min || self.fields.len() > max {
            return self.err(format!("{} takes {} to {} fields", self.fields[0], min - 1, max - 1));
        }
        Ok(())
    }
}

fn current_session<'s>(sched: &'s mut TraceSchedule, p: &Parser) -> Result<&'s mut SessionScript, SynthError> {
    match sched.users.last_mut().and_then(|u| u.sessions.last_mut()) {
        Some(x) => Ok(x),
        None => p.err(format!("{} before any session", p.fields[0])),
    }
}

impl FromStr for TraceSchedule {
    type Err = SynthError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut sched = TraceSchedule::default();
        let mut epoch_fixed = false;
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("");
            let p = Parser { line: i + 1, fields: content.split_whitespace().collect() };
            let Some(&head) = p.fields.first() else { continue };
            let epoch = sched.epoch;
            match head {
                "epoch" => {
                    p.arity(2, 2)?;
                    if epoch_fixed || !sched.users.is_empty() {
                        return p.err("epoch must come first and only once");
                    }
                    sched.epoch = p.field(1, "epoch")?.parse().or_else(|_| p.err("bad epoch"))?;
                    epoch_fixed = true;
                }
                "key" => {
                    p.arity(2, 2)?;
                    sched.key = Some(p.fields[1].to_string());
                }
                "user" => {
                    p.arity(2, 3)?;
                    let tz = match p.fields.get(2) {
                        None => 0,
                        Some(f) => match f.strip_prefix("tz=").and_then(|v| v.parse().ok()) {
                            Some(v) => v,
                            None => return p.err(format!("bad tz {f:?}")),
                        },
                    };
                    sched.users.push(UserScript { user_id: p.id(1, "user id")?, tz_offset: tz, sessions: Vec::new() });
                }
                "session" => {
                    p.arity(4, 4)?;
                    let s = SessionScript {
                        session_id: p.id(1, "session id")?,
                        start: p.time(2, epoch, "start")?,
                        end: p.time(3, epoch, "end")?,
                        windows: Vec::new(),
                        idle: Vec::new(),
                    };
                    match sched.users.last_mut() {
                        Some(u) => u.sessions.push(s),
                        None => return p.err("session before any user"),
                    }
                }
                "window" => {
                    p.arity(4, 4)?;
                    let w = WindowScript {
                        window_id: p.id(1, "window id")?,
                        open: p.time(2, epoch, "open")?,
                        close: p.time(3, epoch, "close")?,
                        tabs: Vec::new(),
                        selects: Vec::new(),
                        focus: Vec::new(),
                        states: Vec::new(),
                    };
                    current_session(&mut sched, &p)?.windows.push(w);
                }
                "idle" => {
                    p.arity(3, 3)?;
                    let span = (p.time(1, epoch, "start")?, p.time(2, epoch, "end")?);
                    current_session(&mut sched, &p)?.idle.push(span);
                }
                _ => {
                    let wid = p.id(1, "window id")?;
                    let s = current_session(&mut sched, &p)?;
                    let Some(w) = s.windows.iter_mut().find(|w| w.window_id == wid) else {
                        return p.err(format!("unknown window {wid}"));
                    };
                    match head {
                        "tab" => {
                            p.arity(5, 6)?;
                            let opener = match p.fields.get(5) {
                                None => None,
                                Some(f) => match f.strip_prefix("opener=").and_then(|v| v.parse().ok()) {
                                    Some(v) => Some(v),
                                    None => return p.err(format!("bad opener {f:?}")),
                                },
                            };
                            w.tabs.push(TabScript {
                                tab_id: p.id(2, "tab id")?,
                                open: p.time(3, epoch, "open")?,
                                close: p.time(4, epoch, "close")?,
                                opener,
                                loads: Vec::new(),
                            });
                        }
                        "select" => {
                            p.arity(4, 4)?;
                            w.selects.push((p.time(3, epoch, "time")?, p.id(2, "tab id")?));
                        }
                        "load" => {
                            p.arity(7, 7)?;
                            let tid = p.id(2, "tab id")?;
                            let cause = match LoadCause::from_name(p.fields[5]) {
                                Some(c) => c,
                                None => return p.err(format!("bad cause {:?}", p.fields[5])),
                            };
                            let background = match p.fields[6] {
                                "fg" => false,
                                "bg" => true,
                                other => return p.err(format!("expected fg or bg, got {other:?}")),
                            };
                            let load = LoadScript {
                                time: p.time(3, epoch, "time")?,
                                url: p.fields[4].into(),
                                cause,
                                background,
                            };
                            match w.tabs.iter_mut().find(|t| t.tab_id == tid) {
                                Some(t) => t.loads.push(load),
                                None => return p.err(format!("unknown tab {tid}")),
                            }
                        }
                        "focus" => {
                            p.arity(4, 4)?;
                            let on = match p.fields[3] {
                                "on" => true,
                                "off" => false,
                                other => return p.err(format!("expected on or off, got {other:?}")),
                            };
                            w.focus.push((p.time(2, epoch, "time")?, on));
                        }
                        "state" => {
                            p.arity(4, 4)?;
                            let Some(st) = WindowState::from_name(p.fields[3]) else {
                                return p.err(format!("bad window state {:?}", p.fields[3]));
                            };
                            w.states.push((p.time(2, epoch, "time")?, st));
                        }
                        other => return p.err(format!("unknown line type {other:?}")),
                    }
                }
            }
        }
        for w in sched.users.iter_mut().flat_map(|u| u.sessions.iter_mut()).flat_map(|s| s.windows.iter_mut()) {
            w.selects.sort_by_key(|s| s.0);
        }
        Ok(sched)
    }
}

impl fmt::Display for TraceSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = |ms: i64| format_duration(ms - self.epoch);
        writeln!(f, "epoch {}", self.epoch)?;
        if let Some(k) = &self.key {
            writeln!(f, "key {k}")?;
        }
        for u in &self.users {
            writeln!(f, "user {} tz={}", u.user_id, u.tz_offset)?;
            for s in &u.sessions {
                writeln!(f, "session {} {} {}", s.session_id, t(s.start), t(s.end))?;
                for w in &s.windows {
                    writeln!(f, "window {} {} {}", w.window_id, t(w.open), t(w.close))?;
                    for tab in &w.tabs {
                        write!(f, "tab {} {} {} {}", w.window_id, tab.tab_id, t(tab.open), t(tab.close))?;
                        match tab.opener {
                            Some(o) => writeln!(f, " opener={o}")?,
                            None => writeln!(f)?,
                        }
                        for l in &tab.loads {
                            writeln!(
                                f,
                                "load {} {} {} {} {} {}",
                                w.window_id,
                                tab.tab_id,
                                t(l.time),
                                l.url,
                                l.cause.as_str(),
                                if l.background { "bg" } else { "fg" }
                            )?;
                        }
                    }
                    for &(time, tid) in &w.selects {
                        writeln!(f, "select {} {tid} {}", w.window_id, t(time))?;
                    }
                    for &(time, on) in &w.focus {
                        writeln!(f, "focus {} {} {}", w.window_id, t(time), if on { "on" } else { "off" })?;
                    }
                    for &(time, st) in &w.states {
                        writeln!(f, "state {} {} {}", w.window_id, t(time), st.as_str())?;
                    }
                }
                for &(a, b) in &s.idle {
                    writeln!(f, "idle {} {}", t(a), t(b))?;
                }
            }
        }
        Ok(())
    }
}
