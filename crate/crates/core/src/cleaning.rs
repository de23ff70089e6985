//! Data cleaning: active-user selection, duplicate removal and estimation
//! of missing session/window closes.
//!
//! All operations accept events of several users interleaved; each user's
//! events must be in non-decreasing time order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::event::{EventKind, EventRecord, SessionId, TabId, UserId, WindowId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CleaningError {
    #[error("events of user {user} are not sorted by time (record {index})")]
    UnsortedInput { user: UserId, index: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleaningReport {
    pub events_in: usize,
    pub events_out: usize,
    pub duplicates_removed: usize,
    pub sessions_closed_by_estimate: usize,
    pub windows_closed_by_estimate: usize,
    pub orphans_quarantined: usize,
    pub users_in_input: usize,
    pub users_retained: Vec<UserId>,
}

impl CleaningReport {
    /// Flat `key=value` lines, one per field.
    pub fn to_key_value(&self) -> String {
        let users: Vec<String> = self.users_retained.iter().map(u64::to_string).collect();
        let mut out = String::new();
        writeln!(out, "events_in={}", self.events_in).unwrap();
        writeln!(out, "events_out={}", self.events_out).unwrap();
        writeln!(out, "duplicates_removed={}", self.duplicates_removed).unwrap();
        writeln!(out, "sessions_closed_by_estimate={}", self.sessions_closed_by_estimate).unwrap();
        writeln!(out, "windows_closed_by_estimate={}", self.windows_closed_by_estimate).unwrap();
        writeln!(out, "orphans_quarantined={}", self.orphans_quarantined).unwrap();
        writeln!(out, "users_in_input={}", self.users_in_input).unwrap();
        writeln!(out, "users_retained={}", users.join(",")).unwrap();
        out
    }
}

/// Output of close estimation and of the full pipeline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanOutput {
    pub events: Vec<EventRecord>,
    /// Events referencing a session that never started.
    pub quarantine: Vec<EventRecord>,
    pub report: CleaningReport,
}

fn distinct_users(events: &[EventRecord]) -> BTreeSet<UserId> {
    events.iter().map(|e| e.user_id).collect()
}

pub fn check_sorted(events: &[EventRecord]) -> Result<(), CleaningError> {
    let mut last: HashMap<UserId, i64> = HashMap::new();
    for (index, e) in events.iter().enumerate() {
        let prev = last.entry(e.user_id).or_insert(i64::MIN);
        if e.time < *prev {
            return Err(CleaningError::UnsortedInput { user: e.user_id, index });
        }
        *prev = e.time;
    }
    Ok(())
}

/// Keeps every event of the `top_n` users with the most page loads; ties go
/// to the smaller user id.
pub fn filter_active_users(events: Vec<EventRecord>, top_n: usize) -> (Vec<EventRecord>, CleaningReport) {
    let mut loads: HashMap<UserId, usize> = HashMap::new();
    for e in &events {
        let n = loads.entry(e.user_id).or_default();
        if matches!(e.kind, EventKind::PageLoad { .. }) {
            *n += 1;
        }
    }
    let mut ranked: Vec<(UserId, usize)> = loads.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let users_in_input = ranked.len();
    let keep: BTreeSet<UserId> = ranked.into_iter().take(top_n.max(1)).map(|(u, _)| u).collect();
    let events_in = events.len();
    let kept: Vec<EventRecord> = events.into_iter().filter(|e| keep.contains(&e.user_id)).collect();
    let report = CleaningReport {
        events_in,
        events_out: kept.len(),
        users_in_input,
        users_retained: keep.into_iter().collect(),
        ..Default::default()
    };
    (kept, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum LifecycleKey {
    SessionStart(UserId, SessionId),
    SessionClose(UserId, SessionId),
    WindowOpen(UserId, SessionId, WindowId),
    WindowClose(UserId, SessionId, WindowId),
    TabOpen(UserId, SessionId, WindowId, TabId),
    TabClose(UserId, SessionId, WindowId, TabId),
}

fn lifecycle_key(e: &EventRecord) -> Option<LifecycleKey> {
    let (u, s) = (e.user_id, e.session_id);
    let w = e.window_id.unwrap_or_default();
    let t = e.tab_id.unwrap_or_default();
    Some(match e.kind {
        EventKind::SessionStart => LifecycleKey::SessionStart(u, s),
        EventKind::SessionClose { .. } => LifecycleKey::SessionClose(u, s),
        EventKind::WindowOpen => LifecycleKey::WindowOpen(u, s, w),
        EventKind::WindowClose { .. } => LifecycleKey::WindowClose(u, s, w),
        EventKind::TabOpen { .. } => LifecycleKey::TabOpen(u, s, w, t),
        EventKind::TabClose => LifecycleKey::TabClose(u, s, w, t),
        _ => return None,
    })
}

/// Keeps only the first occurrence of each lifecycle event and collapses
/// exact copies of repeatable events.
pub fn dedupe(events: Vec<EventRecord>) -> Result<(Vec<EventRecord>, CleaningReport), CleaningError> {
    check_sorted(&events)?;
    let events_in = events.len();
    let users = distinct_users(&events);
    let mut seen_lifecycle: HashSet<LifecycleKey> = HashSet::new();
    let mut seen_exact: HashSet<EventRecord> = HashSet::new();
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        let first = match lifecycle_key(&e) {
            Some(k) => seen_lifecycle.insert(k),
            None => {
                if seen_exact.contains(&e) {
                    false
                } else {
                    seen_exact.insert(e.clone());
                    true
                }
            }
        };
        if first {
            out.push(e);
        }
    }
    let report = CleaningReport {
        events_in,
        events_out: out.len(),
        duplicates_removed: events_in - out.len(),
        users_in_input: users.len(),
        users_retained: users.into_iter().collect(),
        ..Default::default()
    };
    Ok((out, report))
}

/// Inserts an estimated `window_close`/`session_close` at the time of the
/// last event carrying the window/session id wherever the close is missing.
/// Events of sessions without a `session_start` are moved to quarantine.
pub fn estimate_missing_closes(events: Vec<EventRecord>) -> Result<CleanOutput, CleaningError> {
    check_sorted(&events)?;
    let events_in = events.len();
    let users = distinct_users(&events);

    let started: HashSet<(UserId, SessionId)> =
        events.iter().filter(|e| e.kind == EventKind::SessionStart).map(|e| (e.user_id, e.session_id)).collect();
    let (kept, quarantine): (Vec<EventRecord>, Vec<EventRecord>) =
        events.into_iter().partition(|e| started.contains(&(e.user_id, e.session_id)));

    // windows
    let mut opened: HashSet<(UserId, SessionId, WindowId)> = HashSet::new();
    let mut closed: HashSet<(UserId, SessionId, WindowId)> = HashSet::new();
    let mut last_window_event: HashMap<(UserId, SessionId, WindowId), usize> = HashMap::new();
    for (i, e) in kept.iter().enumerate() {
        if let Some(w) = e.window_id {
            let key = (e.user_id, e.session_id, w);
            last_window_event.insert(key, i);
            match e.kind {
                EventKind::WindowOpen => {
                    opened.insert(key);
                }
                EventKind::WindowClose { .. } => {
                    closed.insert(key);
                }
                _ => {}
            }
        }
    }
    let mut window_inserts: Vec<(usize, EventRecord)> = opened
        .difference(&closed)
        .map(|key| {
            let i = last_window_event[key];
            let anchor = &kept[i];
            let close = EventRecord {
                time: anchor.time,
                tz_offset: anchor.tz_offset,
                user_id: key.0,
                window_id: Some(key.2),
                session_id: key.1,
                tab_id: None,
                kind: EventKind::WindowClose { estimated: true },
            };
            (i, close)
        })
        .collect();
    window_inserts.sort_by_key(|(i, c)| (*i, c.window_id));
    let windows_closed = window_inserts.len();
    let with_windows = splice_after(kept, window_inserts);

    // sessions
    let mut session_closed: HashSet<(UserId, SessionId)> = HashSet::new();
    let mut last_session_event: HashMap<(UserId, SessionId), usize> = HashMap::new();
    for (i, e) in with_windows.iter().enumerate() {
        let key = (e.user_id, e.session_id);
        last_session_event.insert(key, i);
        if matches!(e.kind, EventKind::SessionClose { .. }) {
            session_closed.insert(key);
        }
    }
    let mut session_inserts: Vec<(usize, EventRecord)> = started
        .iter()
        .filter(|k| !session_closed.contains(k))
        .map(|key| {
            let i = last_session_event[key];
            let anchor = &with_windows[i];
            let close = EventRecord {
                time: anchor.time,
                tz_offset: anchor.tz_offset,
                user_id: key.0,
                window_id: None,
                session_id: key.1,
                tab_id: None,
                kind: EventKind::SessionClose { estimated: true },
            };
            (i, close)
        })
        .collect();
    session_inserts.sort_by_key(|(i, c)| (*i, c.session_id));
    let sessions_closed = session_inserts.len();
    let out = splice_after(with_windows, session_inserts);

    let report = CleaningReport {
        events_in,
        events_out: out.len(),
        sessions_closed_by_estimate: sessions_closed,
        windows_closed_by_estimate: windows_closed,
        orphans_quarantined: quarantine.len(),
        users_in_input: users.len(),
        users_retained: distinct_users(&out).into_iter().collect(),
        ..Default::default()
    };
    Ok(CleanOutput { events: out, quarantine, report })
}

/// Rebuilds `events` with each insert placed right after its anchor index.
/// `inserts` must be sorted by anchor.
fn splice_after(events: Vec<EventRecord>, inserts: Vec<(usize, EventRecord)>) -> Vec<EventRecord> {
    let mut out = Vec::with_capacity(events.len() + inserts.len());
    let mut pending = inserts.into_iter().peekable();
    for (i, e) in events.into_iter().enumerate() {
        out.push(e);
        while let Some((_, rec)) = pending.next_if(|(at, _)| *at == i) {
            out.push(rec);
        }
    }
    out
}

/// Full cleaning pipeline: active users, sort, dedupe, close estimation.
/// Input may be in any order; it is stably sorted by time first.
pub fn clean(mut events: Vec<EventRecord>, top_users: usize) -> Result<CleanOutput, CleaningError> {
    let events_in = events.len();
    crate::event::sort_by_time(&mut events);
    let (active, filtered) = filter_active_users(events, top_users);
    let (deduped, dd) = dedupe(active)?;
    let mut out = estimate_missing_closes(deduped)?;
    out.report = CleaningReport {
        events_in,
        events_out: out.events.len(),
        duplicates_removed: dd.duplicates_removed,
        users_in_input: filtered.users_in_input,
        users_retained: filtered.users_retained,
        ..out.report
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{hash_url, LoadCause};

    fn ev(user: UserId, time: i64, sid: SessionId, kind: EventKind) -> EventRecord {
        let (wid, tid) = match kind.scope() {
            crate::event::Scope::Session => (None, None),
            crate::event::Scope::Window => (Some(1), None),
            crate::event::Scope::Tab => (Some(1), Some(1)),
        };
        EventRecord { time, tz_offset: 0, user_id: user, window_id: wid, session_id: sid, tab_id: tid, kind }
    }

    fn load(user: UserId, time: i64, sid: SessionId) -> EventRecord {
        let url = hash_url("example.org/a", b"k").unwrap();
        ev(user, time, sid, EventKind::PageLoad { url, cause: LoadCause::Link, background: false })
    }

    #[test]
    fn top_users_by_page_loads() {
        let mut events = Vec::new();
        for (u, n) in [(1, 5), (2, 9), (3, 2)] {
            for t in 0..n {
                events.push(load(u, t + 1, 1));
            }
        }
        let (kept, report) = filter_active_users(events, 2);
        assert_eq!(report.users_retained, vec![1, 2]);
        assert_eq!(kept.len(), 14);
        let (all, report) = filter_active_users(kept, 30);
        assert_eq!(report.users_retained, vec![1, 2]);
        assert_eq!(all.len(), 14);
    }

    #[test]
    fn ties_prefer_smaller_user() {
        let events = vec![load(5, 1, 1), load(4, 1, 1), load(6, 1, 1), load(6, 2, 1)];
        let (_, report) = filter_active_users(events, 2);
        assert_eq!(report.users_retained, vec![4, 6]);
    }

    #[test]
    fn keeps_first_session_close() {
        let events = vec![
            ev(1, 1, 3, EventKind::SessionStart),
            ev(1, 10, 3, EventKind::SessionClose { estimated: false }),
            ev(1, 20, 3, EventKind::SessionClose { estimated: false }),
        ];
        let (out, report) = dedupe(events).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].time, 10);
        assert_eq!(report.duplicates_removed, 1);
    }

    #[test]
    fn exact_duplicates_collapse_repeatables_survive() {
        let sel1 = ev(1, 5, 3, EventKind::TabSelect);
        let sel2 = ev(1, 9, 3, EventKind::TabSelect);
        let events = vec![load(1, 2, 3), load(1, 2, 3), sel1.clone(), sel2.clone()];
        let (out, report) = dedupe(events).unwrap();
        assert_eq!(out, vec![load(1, 2, 3), sel1, sel2]);
        assert_eq!(report.duplicates_removed, 1);
    }

    #[test]
    fn unsorted_rejected() {
        let events = vec![load(1, 5, 1), load(2, 1, 1), load(1, 4, 1)];
        assert_eq!(dedupe(events).unwrap_err(), CleaningError::UnsortedInput { user: 1, index: 2 });
    }

    #[test]
    fn estimates_session_close_at_last_event() {
        let events = vec![ev(1, 1, 3, EventKind::SessionStart), load(1, 10, 3), load(1, 50, 3)];
        let out = estimate_missing_closes(events).unwrap();
        let last = out.events.last().unwrap();
        assert_eq!(last.kind, EventKind::SessionClose { estimated: true });
        assert_eq!(last.time, 50);
        assert_eq!(out.report.sessions_closed_by_estimate, 1);
    }

    #[test]
    fn estimates_window_close_before_session_close() {
        let events = vec![
            ev(1, 1, 3, EventKind::SessionStart),
            ev(1, 1, 3, EventKind::WindowOpen),
            load(1, 40, 3),
            ev(1, 60, 3, EventKind::Activity { active: false }),
        ];
        let out = estimate_missing_closes(events).unwrap();
        let kinds: Vec<(&str, i64)> = out.events.iter().map(|e| (e.kind.name(), e.time)).collect();
        assert_eq!(
            kinds,
            vec![
                ("session_start", 1),
                ("window_open", 1),
                ("page_load", 40),
                ("window_close", 40),
                ("activity", 60),
                ("session_close", 60)
            ]
        );
        assert_eq!(out.report.windows_closed_by_estimate, 1);
    }

    #[test]
    fn window_ids_reused_across_sessions() {
        let mut events = Vec::new();
        for (sid, t) in [(1, 10), (2, 100)] {
            events.push(ev(1, t, sid, EventKind::SessionStart));
            events.push(ev(1, t, sid, EventKind::WindowOpen));
            events.push(ev(1, t, sid, EventKind::TabOpen { opener: None }));
            events.push(load(1, t + 5, sid));
        }
        events.push(ev(1, 50, 1, EventKind::WindowClose { estimated: false }));
        crate::event::sort_by_time(&mut events);
        let (deduped, report) = dedupe(events).unwrap();
        assert_eq!(report.duplicates_removed, 0);
        let out = estimate_missing_closes(deduped).unwrap();
        assert_eq!(out.report.windows_closed_by_estimate, 1);
        let est: Vec<_> = out.events.iter().filter(|e| e.kind == EventKind::WindowClose { estimated: true }).collect();
        assert_eq!((est[0].session_id, est[0].time), (2, 105));
    }

    #[test]
    fn closed_session_unchanged() {
        let events = vec![
            ev(1, 1, 3, EventKind::SessionStart),
            load(1, 10, 3),
            ev(1, 20, 3, EventKind::SessionClose { estimated: false }),
        ];
        let out = estimate_missing_closes(events.clone()).unwrap();
        assert_eq!(out.events, events);
        assert_eq!(out.report.sessions_closed_by_estimate, 0);
    }

    #[test]
    fn orphans_quarantined() {
        let events = vec![ev(1, 1, 3, EventKind::SessionStart), load(1, 5, 4), load(1, 6, 3)];
        let out = estimate_missing_closes(events).unwrap();
        assert_eq!(out.quarantine, vec![load(1, 5, 4)]);
        assert_eq!(out.report.orphans_quarantined, 1);
        assert!(out.events.iter().all(|e| e.session_id == 3));
    }

    #[test]
    fn pipeline_is_idempotent() {
        let events = vec![
            ev(1, 1, 3, EventKind::SessionStart),
            ev(1, 1, 3, EventKind::SessionStart),
            ev(1, 1, 3, EventKind::WindowOpen),
            load(1, 7, 3),
            load(1, 7, 3),
            load(1, 9, 8),
        ];
        let once = clean(events, 30).unwrap();
        let twice = clean(once.events.clone(), 30).unwrap();
        assert_eq!(once.events, twice.events);
        assert_eq!(twice.report.duplicates_removed, 0);
        assert_eq!(twice.report.sessions_closed_by_estimate, 0);
        assert_eq!(once.report.duplicates_removed, 2);
        assert!(once.report.to_key_value().contains("users_retained=1\n"));
    }
}
