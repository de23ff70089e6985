//! Session reconstruction.
//!
//! Turns one user's cleaned, time-ordered events into [`SessionModel`]s:
//! lifespans of sessions, windows and tabs, tab selection, window focus and
//! minimization, per-page load and visibility timelines, and the user's
//! activity timeline. Event times are clipped into the enclosing lifespan
//! (session, then window, then tab), so nesting holds by construction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::event::{EventKind, EventRecord, LoadCause, SessionId, TabId, UrlRef, UserId, WindowId};
use crate::interval::{Interval, IntervalSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("inconsistent state: {0}")]
    InconsistentState(String),
}

/// An event that could not be applied; it was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Anomaly {
    pub event: EventRecord,
    pub error: SessionError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageView {
    /// Position of the load among all loads of the session.
    pub seq: usize,
    pub window_id: WindowId,
    pub tab_id: TabId,
    pub url: UrlRef,
    pub load_time: i64,
    /// From load until replaced, or the tab/window/session closes.
    pub loaded: Interval,
    pub visible_time: IntervalSet,
    pub cause: LoadCause,
    pub opened_in_background: bool,
    /// Times the page's tab became selected while the page was loaded,
    /// counting a foreground load as one.
    pub selections: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabModel {
    pub tab_id: TabId,
    pub opener: Option<TabId>,
    pub lifespan: Interval,
    pub selected_time: IntervalSet,
    pub page_loads: Vec<PageView>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowModel {
    pub window_id: WindowId,
    pub lifespan: Interval,
    pub focus_time: IntervalSet,
    pub minimized_time: IntervalSet,
    pub tabs: Vec<TabModel>,
    /// Sorted distinct times of every event carrying this window id,
    /// including the lifespan endpoints.
    pub event_times: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionModel {
    pub user_id: UserId,
    pub session_id: SessionId,
    pub tz_offset: i32,
    pub lifespan: Interval,
    pub windows: Vec<WindowModel>,
    pub active_time: IntervalSet,
}

impl SessionModel {
    pub fn length(&self) -> i64 {
        self.lifespan.len()
    }

    /// All page views in load order.
    pub fn page_views(&self) -> Vec<&PageView> {
        let mut v: Vec<&PageView> =
            self.windows.iter().flat_map(|w| w.tabs.iter()).flat_map(|t| t.page_loads.iter()).collect();
        v.sort_by_key(|p| p.seq);
        v
    }

    pub fn tabs(&self) -> impl Iterator<Item = &TabModel> {
        self.windows.iter().flat_map(|w| w.tabs.iter())
    }

    /// Local wall-clock start, epoch milliseconds.
    pub fn local_start(&self) -> i64 {
        self.lifespan.start - i64::from(self.tz_offset) * 60_000
    }

    pub fn window(&self, id: WindowId) -> Option<&WindowModel> {
        self.windows.iter().find(|w| w.window_id == id)
    }
}

/// Active time: the session lifespan minus the inactive spans.
pub fn activity_timeline(session: &SessionModel) -> IntervalSet {
    session.active_time.clone()
}

#[derive(Debug, Default)]
pub struct BuildOutput {
    pub sessions: Vec<SessionModel>,
    pub anomalies: Vec<Anomaly>,
}

struct PageState {
    view: PageView,
    visible_since: Option<i64>,
    visible: Vec<Interval>,
}

struct TabState {
    open: i64,
    close: Option<i64>,
    opener: Option<TabId>,
    selected_since: Option<i64>,
    selected: Vec<Interval>,
    pages: Vec<PageState>,
}

impl TabState {
    fn end(&self, window_end: i64) -> i64 {
        self.close.unwrap_or(window_end)
    }

    fn end_current_page(&mut self, t: i64) {
        if let Some(p) = self.pages.last_mut() {
            if p.view.loaded.end == i64::MAX {
                p.view.loaded.end = t;
                if let Some(s) = p.visible_since.take() {
                    p.visible.push(Interval::new(s, t));
                }
            }
        }
    }

    fn current_page(&mut self) -> Option<&mut PageState> {
        self.pages.last_mut().filter(|p| p.view.loaded.end == i64::MAX)
    }

    fn close_at(&mut self, t: i64) {
        self.end_current_page(t);
        if let Some(s) = self.selected_since.take() {
            self.selected.push(Interval::new(s, t));
        }
        self.close = Some(t);
    }
}

struct WindowState {
    open: i64,
    close: Option<i64>,
    focused_since: Option<i64>,
    focus: Vec<Interval>,
    minimized_since: Option<i64>,
    minimized: Vec<Interval>,
    selected: Option<TabId>,
    tabs: Vec<(TabId, TabState)>,
    event_times: Vec<i64>,
}

impl WindowState {
    fn new(open: i64) -> Self {
        WindowState {
            open,
            close: None,
            focused_since: Some(open),
            focus: Vec::new(),
            minimized_since: None,
            minimized: Vec::new(),
            selected: None,
            tabs: Vec::new(),
            event_times: Vec::new(),
        }
    }

    fn tab_index(&mut self, tab: TabId, open: i64) -> usize {
        if let Some(i) = self.tabs.iter().position(|(id, _)| *id == tab) {
            return i;
        }
        self.tabs.push((
            tab,
            TabState { open, close: None, opener: None, selected_since: None, selected: Vec::new(), pages: Vec::new() },
        ));
        self.tabs.len() - 1
    }

    fn close_at(&mut self, t: i64) {
        for (_, tab) in self.tabs.iter_mut() {
            if tab.close.is_none() {
                tab.close_at(t.max(tab.open));
            }
        }
        self.selected = None;
        if let Some(s) = self.focused_since.take() {
            self.focus.push(Interval::new(s, t));
        }
        if let Some(s) = self.minimized_since.take() {
            self.minimized.push(Interval::new(s, t));
        }
        self.close = Some(t);
    }
}

/// Reconstructs every session of one user. Events must be cleaned and
/// time-ordered; inconsistent events are dropped and reported.
pub fn build_sessions(events: &[EventRecord]) -> BuildOutput {
    let mut groups: BTreeMap<(UserId, SessionId), Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        groups.entry((e.user_id, e.session_id)).or_default().push(e);
    }
    let mut out = BuildOutput::default();
    for ((user, sid), evs) in groups {
        let session = build_one(user, sid, &evs, &mut out.anomalies);
        out.sessions.push(session);
    }
    out.sessions.sort_by_key(|s| (s.user_id, s.lifespan.start, s.session_id));
    out
}

fn build_one(user: UserId, sid: SessionId, evs: &[&EventRecord], anomalies: &mut Vec<Anomaly>) -> SessionModel {
    let start_ev = evs.iter().find(|e| e.kind == EventKind::SessionStart);
    let start = start_ev.map_or(evs[0].time, |e| e.time);
    let end = evs
        .iter()
        .find(|e| matches!(e.kind, EventKind::SessionClose { .. }))
        .map_or_else(|| evs.iter().map(|e| e.time).max().unwrap_or(start), |e| e.time)
        .max(start);
    let lifespan = Interval::new(start, end);
    let tz_offset = start_ev.unwrap_or(&evs[0]).tz_offset;

    let mut windows: Vec<(WindowId, WindowState)> = Vec::new();
    let mut inactive: Vec<Interval> = Vec::new();
    let mut inactive_since: Option<i64> = None;
    let mut seq = 0usize;

    for e in evs {
        let tc = lifespan.clamp_time(e.time);
        let Some(wid) = e.window_id else {
            if let EventKind::Activity { active } = e.kind {
                match (active, inactive_since) {
                    (false, None) => inactive_since = Some(tc),
                    (true, Some(s)) => {
                        inactive.push(Interval::new(s, tc));
                        inactive_since = None;
                    }
                    _ => {}
                }
            }
            continue;
        };

        let wi = match windows.iter().position(|(id, _)| *id == wid) {
            Some(i) => i,
            None => {
                let open = if e.kind == EventKind::WindowOpen { tc } else { start };
                windows.push((wid, WindowState::new(open)));
                windows.len() - 1
            }
        };
        let w = &mut windows[wi].1;
        let tw = tc.clamp(w.open, w.close.unwrap_or(end).max(w.open));
        w.event_times.push(tw);
        let window_end = w.close.unwrap_or(end);

        match &e.kind {
            EventKind::WindowOpen => {}
            EventKind::WindowClose { .. } => {
                if w.close.is_none() {
                    w.close_at(tw);
                }
            }
            EventKind::WindowState { state } => {
                let minimized = *state == crate::event::WindowState::Minimized;
                match (minimized, w.minimized_since) {
                    (true, None) => w.minimized_since = Some(tw),
                    (false, Some(s)) => {
                        w.minimized.push(Interval::new(s, tw));
                        w.minimized_since = None;
                    }
                    _ => {}
                }
            }
            EventKind::WindowFocus { focused } => match (*focused, w.focused_since) {
                (true, None) => w.focused_since = Some(tw),
                (false, Some(s)) => {
                    w.focus.push(Interval::new(s, tw));
                    w.focused_since = None;
                }
                _ => {}
            },
            kind => {
                let tid = e.tab_id.expect("validated tab-scoped event");
                let open_at = if matches!(kind, EventKind::TabOpen { .. }) { tw } else { w.open };
                let ti = w.tab_index(tid, open_at);
                let previously_selected = w.selected;
                let tab = &mut w.tabs[ti].1;
                let tt = tw.clamp(tab.open, tab.end(window_end).max(tab.open));
                match kind {
                    EventKind::TabOpen { opener } => {
                        if tab.opener.is_none() {
                            tab.opener = *opener;
                        }
                    }
                    EventKind::TabClose => {
                        if tab.close.is_none() {
                            tab.close_at(tt);
                            if previously_selected == Some(tid) {
                                w.selected = None;
                            }
                        }
                    }
                    EventKind::TabSelect => {
                        if tab.close.is_some() {
                            anomalies.push(Anomaly {
                                event: (*e).clone(),
                                error: SessionError::InconsistentState(format!("select of closed tab {tid}")),
                            });
                            continue;
                        }
                        if let Some(p) = tab.current_page() {
                            p.view.selections += 1;
                        }
                        if tab.selected_since.is_none() {
                            tab.selected_since = Some(tt);
                        }
                        w.selected = Some(tid);
                        if let Some(prev) = previously_selected.filter(|p| *p != tid) {
                            if let Some((_, other)) = w.tabs.iter_mut().find(|(id, _)| *id == prev) {
                                if let Some(s) = other.selected_since.take() {
                                    other.selected.push(Interval::new(s, tt));
                                }
                            }
                        }
                    }
                    EventKind::PageLoad { url, cause, background } => {
                        tab.end_current_page(tt);
                        let foreground = !*background;
                        tab.pages.push(PageState {
                            view: PageView {
                                seq,
                                window_id: wid,
                                tab_id: tid,
                                url: url.clone(),
                                load_time: tt,
                                loaded: Interval::new(tt, i64::MAX),
                                visible_time: IntervalSet::new(),
                                cause: *cause,
                                opened_in_background: *background,
                                selections: u32::from(foreground),
                            },
                            visible_since: foreground.then_some(tt),
                            visible: Vec::new(),
                        });
                        seq += 1;
                    }
                    EventKind::PageVisibility { visible } => match tab.current_page() {
                        None => anomalies.push(Anomaly {
                            event: (*e).clone(),
                            error: SessionError::InconsistentState(format!(
                                "visibility change for tab {tid} without a loaded page"
                            )),
                        }),
                        Some(p) => match (*visible, p.visible_since) {
                            (true, None) => p.visible_since = Some(tt),
                            (false, Some(s)) => {
                                p.visible.push(Interval::new(s, tt));
                                p.visible_since = None;
                            }
                            _ => {}
                        },
                    },
                    _ => unreachable!("window- and session-scoped kinds handled above"),
                }
            }
        }
    }

    if let Some(s) = inactive_since {
        inactive.push(Interval::new(s, end));
    }
    let inactive: IntervalSet = inactive.into_iter().collect();
    let active_time = IntervalSet::from_interval(lifespan).difference(&inactive);

    let windows = windows
        .into_iter()
        .map(|(wid, mut w)| {
            if w.close.is_none() {
                w.close_at(end.max(w.open));
            }
            let wl = Interval::new(w.open, w.close.unwrap());
            w.event_times.push(wl.start);
            w.event_times.push(wl.end);
            w.event_times.sort_unstable();
            w.event_times.dedup();
            let tabs = w
                .tabs
                .into_iter()
                .map(|(tid, t)| {
                    let tl = wl.clip(&Interval::new(t.open, t.close.unwrap_or(wl.end)));
                    let pages = t
                        .pages
                        .into_iter()
                        .map(|p| {
                            let mut view = p.view;
                            view.loaded = tl.clip(&view.loaded);
                            view.visible_time = p.visible.into_iter().collect::<IntervalSet>().clip(view.loaded);
                            view
                        })
                        .collect();
                    TabModel {
                        tab_id: tid,
                        opener: t.opener,
                        lifespan: tl,
                        selected_time: t.selected.into_iter().collect::<IntervalSet>().clip(tl),
                        page_loads: pages,
                    }
                })
                .collect();
            WindowModel {
                window_id: wid,
                lifespan: wl,
                focus_time: w.focus.into_iter().collect::<IntervalSet>().clip(wl),
                minimized_time: w.minimized.into_iter().collect::<IntervalSet>().clip(wl),
                tabs,
                event_times: w.event_times,
            }
        })
        .collect();

    SessionModel { user_id: user, session_id: sid, tz_offset, lifespan, windows, active_time }
}

/// Human-readable dump of one session model.
///
/// ```text
/// session <sid> user <uid> tz <offset> lifespan [a, b)
/// active <interval set>
/// window <wid> lifespan [a, b) focus <set> minimized <set>
///   tab <tid> opener <tid|-> lifespan [a, b) selected <set>
///     page <seq> load <t> loaded [a, b) visible <set> cause <c> bg <bool> selections <n> domain <digest> url <plain|->
/// ```
pub fn dump_session(s: &SessionModel) -> String {
    let mut out = String::new();
    writeln!(out, "session {} user {} tz {} lifespan {}", s.session_id, s.user_id, s.tz_offset, s.lifespan).unwrap();
    writeln!(out, "active {}", s.active_time).unwrap();
    for w in &s.windows {
        writeln!(
            out,
            "window {} lifespan {} focus {} minimized {}",
            w.window_id, w.lifespan, w.focus_time, w.minimized_time
        )
        .unwrap();
        for t in &w.tabs {
            let opener = t.opener.map_or_else(|| "-".to_string(), |o| o.to_string());
            writeln!(out, "  tab {} opener {} lifespan {} selected {}", t.tab_id, opener, t.lifespan, t.selected_time)
                .unwrap();
            for p in &t.page_loads {
                writeln!(
                    out,
                    "    page {} load {} loaded {} visible {} cause {} bg {} selections {} domain {} url {}",
                    p.seq,
                    p.load_time,
                    p.loaded,
                    p.visible_time,
                    p.cause.as_str(),
                    p.opened_in_background,
                    p.selections,
                    p.url.h_domain,
                    p.url.plaintext.as_deref().unwrap_or("-"),
                )
                .unwrap();
            }
        }
    }
    out
}
