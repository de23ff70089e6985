//! Schedule to event stream, plus corruption injection.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::event::{hash_url, serialize_event, EventKind, EventRecord, TabId, UrlRef, WindowState};

use super::schedule::{SessionScript, TraceSchedule, UserScript};
use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prio {
    SessionStart,
    WindowOpen,
    TabOpen,
    Select,
    Load,
    WindowChange,
    Activity,
    TabClose,
    WindowClose,
    SessionClose,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    SessionStart,
    SessionClose,
    WindowOpen(usize),
    WindowClose(usize),
    TabOpen(usize, usize),
    TabClose(usize, usize),
    Select(usize, TabId),
    Load(usize, usize, usize),
    Focus(usize, bool),
    State(usize, WindowState),
    Activity(bool),
}

/// Realizes a validated schedule. Output is grouped by user in schedule
/// order, each user's events in time order.
pub fn generate(schedule: &TraceSchedule, seed: u64) -> Result<Vec<EventRecord>, SynthError> {
    schedule.validate()?;
    let key = schedule.hash_key(seed);
    let mut urls: HashMap<&str, UrlRef> = HashMap::new();
    for (_, s) in schedule.sessions() {
        for l in s.windows.iter().flat_map(|w| &w.tabs).flat_map(|t| &t.loads) {
            if !urls.contains_key(l.url.as_str()) {
                let r = hash_url(&l.url, &key)
                    .map_err(|e| SynthError::InconsistentSchedule(format!("load url {:?}: {e}", l.url)))?;
                urls.insert(&l.url, r.with_plaintext(l.url.clone()));
            }
        }
    }
    let per_user: Vec<Vec<EventRecord>> = schedule
        .users
        .par_iter()
        .map(|u| u.sessions.iter().flat_map(|s| session_events(u, s, &urls)).collect())
        .collect();
    Ok(per_user.concat())
}

/// Serialized form of [`generate`], header included.
pub fn generate_bytes(schedule: &TraceSchedule, seed: u64) -> Result<Vec<u8>, SynthError> {
    Ok(crate::io::encode_events(&generate(schedule, seed)?))
}

fn session_events(u: &UserScript, s: &SessionScript, urls: &HashMap<&str, UrlRef>) -> Vec<EventRecord> {
    let mut actions: Vec<(i64, Prio, Action)> = vec![(s.start, Prio::SessionStart, Action::SessionStart)];
    for (wi, w) in s.windows.iter().enumerate() {
        actions.push((w.open, Prio::WindowOpen, Action::WindowOpen(wi)));
        for (ti, t) in w.tabs.iter().enumerate() {
            actions.push((t.open, Prio::TabOpen, Action::TabOpen(wi, ti)));
            for (li, l) in t.loads.iter().enumerate() {
                actions.push((l.time, Prio::Load, Action::Load(wi, ti, li)));
            }
            actions.push((t.close, Prio::TabClose, Action::TabClose(wi, ti)));
        }
        actions.extend(w.selects.iter().map(|&(t, id)| (t, Prio::Select, Action::Select(wi, id))));
        actions.extend(w.focus.iter().map(|&(t, on)| (t, Prio::WindowChange, Action::Focus(wi, on))));
        actions.extend(w.states.iter().map(|&(t, st)| (t, Prio::WindowChange, Action::State(wi, st))));
        actions.push((w.close, Prio::WindowClose, Action::WindowClose(wi)));
    }
    for &(a, b) in &s.idle {
        actions.push((a, Prio::Activity, Action::Activity(false)));
        if b < s.end {
            actions.push((b, Prio::Activity, Action::Activity(true)));
        }
    }
    actions.push((s.end, Prio::SessionClose, Action::SessionClose));
    actions.sort_by_key(|a| (a.0, a.1));

    let rec = |time: i64, wid: Option<u64>, tid: Option<u64>, kind: EventKind| EventRecord {
        time,
        tz_offset: u.tz_offset,
        user_id: u.user_id,
        window_id: wid,
        session_id: s.session_id,
        tab_id: tid,
        kind,
    };
    let mut displayed: Vec<Option<TabId>> = vec![None; s.windows.len()];
    let mut has_page: HashMap<(usize, TabId), bool> = HashMap::new();
    let mut out = Vec::with_capacity(actions.len() * 3 / 2);
    for (time, _, action) in actions {
        match action {
            Action::SessionStart => out.push(rec(time, None, None, EventKind::SessionStart)),
            Action::SessionClose => out.push(rec(time, None, None, EventKind::SessionClose { estimated: false })),
            Action::Activity(active) => out.push(rec(time, None, None, EventKind::Activity { active })),
            Action::WindowOpen(wi) => out.push(rec(time, Some(s.windows[wi].window_id), None, EventKind::WindowOpen)),
            Action::WindowClose(wi) => {
                out.push(rec(time, Some(s.windows[wi].window_id), None, EventKind::WindowClose { estimated: false }))
            }
            Action::Focus(wi, focused) => {
                out.push(rec(time, Some(s.windows[wi].window_id), None, EventKind::WindowFocus { focused }))
            }
            Action::State(wi, state) => {
                out.push(rec(time, Some(s.windows[wi].window_id), None, EventKind::WindowState { state }))
            }
            Action::TabOpen(wi, ti) => {
                let w = &s.windows[wi];
                let t = &w.tabs[ti];
                out.push(rec(time, Some(w.window_id), Some(t.tab_id), EventKind::TabOpen { opener: t.opener }));
            }
            Action::TabClose(wi, ti) => {
                let w = &s.windows[wi];
                let tid = w.tabs[ti].tab_id;
                out.push(rec(time, Some(w.window_id), Some(tid), EventKind::TabClose));
                if displayed[wi] == Some(tid) {
                    displayed[wi] = None;
                }
            }
            Action::Select(wi, tid) => {
                let wid = s.windows[wi].window_id;
                out.push(rec(time, Some(wid), Some(tid), EventKind::TabSelect));
                if let Some(prev) = displayed[wi].filter(|p| *p != tid) {
                    if has_page.get(&(wi, prev)).copied().unwrap_or(false) {
                        out.push(rec(time, Some(wid), Some(prev), EventKind::PageVisibility { visible: false }));
                    }
                }
                if has_page.get(&(wi, tid)).copied().unwrap_or(false) {
                    out.push(rec(time, Some(wid), Some(tid), EventKind::PageVisibility { visible: true }));
                }
                displayed[wi] = Some(tid);
            }
            Action::Load(wi, ti, li) => {
                let w = &s.windows[wi];
                let t = &w.tabs[ti];
                let l = &t.loads[li];
                let url = urls[l.url.as_str()].clone();
                out.push(rec(
                    time,
                    Some(w.window_id),
                    Some(t.tab_id),
                    EventKind::PageLoad { url, cause: l.cause, background: l.background },
                ));
                has_page.insert((wi, t.tab_id), true);
                if !l.background {
                    if let Some(prev) = displayed[wi].filter(|p| *p != t.tab_id) {
                        if has_page.get(&(wi, prev)).copied().unwrap_or(false) {
                            out.push(rec(
                                time,
                                Some(w.window_id),
                                Some(prev),
                                EventKind::PageVisibility { visible: false },
                            ));
                        }
                    }
                    displayed[wi] = Some(t.tab_id);
                }
            }
        }
    }
    out
}

/// One injected corruption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Corruption {
    /// Exact copy inserted at `index` of the corrupted stream, directly
    /// after the original.
    Duplicate { index: usize, event: EventRecord },
    /// Close record removed from the stream.
    DroppedClose { event: EventRecord },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorruptionManifest {
    pub seed: u64,
    pub duplicate_rate: f64,
    pub drop_close_rate: f64,
    pub entries: Vec<Corruption>,
}

impl CorruptionManifest {
    pub fn duplicates(&self) -> usize {
        self.entries.iter().filter(|c| matches!(c, Corruption::Duplicate { .. })).count()
    }

    pub fn dropped(&self) -> impl Iterator<Item = &EventRecord> {
        self.entries.iter().filter_map(|c| match c {
            Corruption::DroppedClose { event } => Some(event),
            _ => None,
        })
    }

    /// One line per corruption: `duplicate <index> <record>` or
    /// `dropped <record>`, records in wire format.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# corruption manifest seed={} duplicate_rate={} drop_close_rate={}\n",
            self.seed, self.duplicate_rate, self.drop_close_rate
        );
        for c in &self.entries {
            match c {
                Corruption::Duplicate { index, event } => {
                    out.push_str(&format!("duplicate {index} {}\n", serialize_event(event)))
                }
                Corruption::DroppedClose { event } => out.push_str(&format!("dropped {}\n", serialize_event(event))),
            }
        }
        out
    }
}

/// Duplicates lifecycle singletons at `duplicate_rate` and deletes session
/// and window closes at `drop_close_rate`. Rates are clamped to `[0, 1]`.
pub fn corrupt(
    stream: &[EventRecord],
    duplicate_rate: f64,
    drop_close_rate: f64,
    seed: u64,
) -> (Vec<EventRecord>, CorruptionManifest) {
    let dup = duplicate_rate.clamp(0.0, 1.0);
    let drop = drop_close_rate.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = CorruptionManifest { seed, duplicate_rate: dup, drop_close_rate: drop, entries: Vec::new() };
    let mut out = Vec::with_capacity(stream.len());
    for e in stream {
        let is_close = matches!(e.kind, EventKind::SessionClose { .. } | EventKind::WindowClose { .. });
        if is_close && rng.random_bool(drop) {
            manifest.entries.push(Corruption::DroppedClose { event: e.clone() });
            continue;
        }
        out.push(e.clone());
        if e.kind.is_lifecycle_singleton() && rng.random_bool(dup) {
            manifest.entries.push(Corruption::Duplicate { index: out.len(), event: e.clone() });
            out.push(e.clone());
        }
    }
    (out, manifest)
}
