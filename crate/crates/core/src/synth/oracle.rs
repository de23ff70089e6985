//! Ground truth by direct evaluation of a schedule.
//!
//! Every session is cut into cells of the greatest common divisor of all
//! its scripted times (relative to session start). Each scripted boundary
//! falls on a cell edge, so every state is constant within a cell and the
//! half-open measures are exact. Each cell is evaluated by asking the
//! schedule what holds at that instant; nothing here touches the interval
//! algebra or the metric code.

use std::collections::BTreeMap;

use crate::event::{hash_url, LoadCause, SessionId, TabId, UserId, WindowId, WindowState};

use super::schedule::{SessionScript, TraceSchedule, WindowScript};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageTruth {
    pub window_id: WindowId,
    pub tab_id: TabId,
    pub load_time: i64,
    pub domain_key: String,
    pub loaded_ms: i64,
    pub visible_ms: i64,
    /// Visible while the user was active.
    pub active_visible_ms: i64,
    /// Visible in a focused, non-minimized window.
    pub strict_ms: i64,
    pub active_strict_ms: i64,
    pub selections: u32,
    /// 0 is the tree root, `k` the page with sequence number `k - 1`.
    pub parent: usize,
    pub same_tab: bool,
}

/// Window id, window lifespan and `(tab id, tab lifespan)` pairs.
pub type WindowSpans = (WindowId, (i64, i64), Vec<(TabId, (i64, i64))>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTruth {
    pub user_id: UserId,
    pub session_id: SessionId,
    pub tz_offset: i32,
    pub start: i64,
    pub length_ms: i64,
    /// Level -> milliseconds with exactly that many windows open.
    pub window_levels: BTreeMap<u32, i64>,
    pub tab_levels: BTreeMap<u32, i64>,
    pub tabs_used: usize,
    pub loads: usize,
    pub explicit_idle_ms: i64,
    /// `(threshold, idle ms)`.
    pub implicit_idle_ms: Vec<(i64, i64)>,
    /// In load order.
    pub pages: Vec<PageTruth>,
    /// Per window: lifespan and tab lifespans, for model comparison.
    pub windows: Vec<WindowSpans>,
}

impl SessionTruth {
    pub fn nav_nodes(&self) -> usize {
        self.pages.len() + 1
    }

    pub fn nav_internal(&self) -> usize {
        let mut has_child = vec![false; self.pages.len() + 1];
        for p in &self.pages {
            has_child[p.parent] = true;
        }
        has_child.iter().filter(|&&b| b).count()
    }

    pub fn nav_depth_sum(&self) -> usize {
        let mut depth = vec![0usize; self.pages.len() + 1];
        for (i, p) in self.pages.iter().enumerate() {
            depth[i + 1] = depth[p.parent] + 1;
        }
        depth.iter().sum()
    }

    pub fn never_visible(&self) -> usize {
        self.pages.iter().filter(|p| p.visible_ms == 0).count()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn session_times(s: &SessionScript) -> Vec<i64> {
    let mut v = vec![s.start, s.end];
    for &(a, b) in &s.idle {
        v.extend([a, b]);
    }
    for w in &s.windows {
        v.extend(window_event_times(w));
    }
    v
}

/// Times of every event the window would log.
fn window_event_times(w: &WindowScript) -> Vec<i64> {
    let mut v = vec![w.open, w.close];
    for t in &w.tabs {
        v.extend([t.open, t.close]);
        v.extend(t.loads.iter().map(|l| l.time));
    }
    v.extend(w.selects.iter().map(|s| s.0));
    v.extend(w.focus.iter().map(|f| f.0));
    v.extend(w.states.iter().map(|s| s.0));
    v.sort_unstable();
    v.dedup();
    v
}

fn displayed_at(w: &WindowScript, t: i64) -> Option<TabId> {
    let mut best: Option<(i64, TabId)> = None;
    let mut consider = |time: i64, tab: TabId| {
        if time <= t && best.is_none_or(|b| time > b.0) {
            best = Some((time, tab));
        }
    };
    for &(time, tab) in &w.selects {
        consider(time, tab);
    }
    for tab in &w.tabs {
        for l in tab.loads.iter().filter(|l| !l.background) {
            consider(l.time, tab.tab_id);
        }
    }
    let (_, id) = best?;
    let tab = w.tabs.iter().find(|x| x.tab_id == id)?;
    (tab.open <= t && t < tab.close).then_some(id)
}

fn focused_at(w: &WindowScript, t: i64) -> bool {
    w.focus.iter().rfind(|f| f.0 <= t).is_none_or(|f| f.1)
}

fn minimized_at(w: &WindowScript, t: i64) -> bool {
    w.states.iter().rfind(|s| s.0 <= t).is_some_and(|s| s.1 == WindowState::Minimized)
}

fn window_idle_at(times: &[i64], threshold: i64, t: i64, cell: i64) -> bool {
    times.windows(2).any(|p| p[1] - p[0] > threshold && p[0] <= t && t + cell <= p[1])
}

struct Page<'a> {
    wi: usize,
    ti: usize,
    time: i64,
    end: i64,
    url: &'a str,
    cause: LoadCause,
    background: bool,
}

pub fn ground_truth(schedule: &TraceSchedule, seed: u64, thresholds: &[i64]) -> Vec<SessionTruth> {
    let key = schedule.hash_key(seed);
    schedule.sessions().map(|(u, s)| session_truth(u.user_id, u.tz_offset, s, &key, thresholds)).collect()
}

fn session_truth(user_id: UserId, tz_offset: i32, s: &SessionScript, key: &[u8], thresholds: &[i64]) -> SessionTruth {
    let cell = session_times(s).iter().fold(0, |g, &t| gcd(g, t - s.start)).max(1);

    // load order: time, then window, tab
    let mut pages: Vec<Page> = Vec::new();
    for (wi, w) in s.windows.iter().enumerate() {
        for (ti, tab) in w.tabs.iter().enumerate() {
            for (li, l) in tab.loads.iter().enumerate() {
                let end = tab.loads.get(li + 1).map_or(tab.close, |n| n.time);
                pages.push(Page { wi, ti, time: l.time, end, url: &l.url, cause: l.cause, background: l.background });
            }
        }
    }
    pages.sort_by_key(|p| (p.time, p.wi, p.ti));

    let ev_times: Vec<Vec<i64>> = s.windows.iter().map(window_event_times).collect();
    let mut window_levels = BTreeMap::new();
    let mut tab_levels = BTreeMap::new();
    let mut explicit = 0;
    let mut implicit = vec![0i64; thresholds.len()];
    let mut acc = vec![[0i64; 5]; pages.len()];

    let mut t = s.start;
    while t < s.end {
        let open_w: Vec<usize> =
            (0..s.windows.len()).filter(|&i| s.windows[i].open <= t && t < s.windows[i].close).collect();
        let open_tabs = s.windows.iter().flat_map(|w| &w.tabs).filter(|x| x.open <= t && t < x.close).count();
        if !open_w.is_empty() {
            *window_levels.entry(open_w.len() as u32).or_insert(0) += cell;
        }
        if open_tabs > 0 {
            *tab_levels.entry(open_tabs as u32).or_insert(0) += cell;
        }
        let active = !s.idle.iter().any(|&(a, b)| a <= t && t < b);
        if !active {
            explicit += cell;
        }
        for (k, &thr) in thresholds.iter().enumerate() {
            if !open_w.is_empty() && open_w.iter().all(|&i| window_idle_at(&ev_times[i], thr, t, cell)) {
                implicit[k] += cell;
            }
        }
        let view: Vec<(Option<TabId>, bool)> =
            s.windows.iter().map(|w| (displayed_at(w, t), focused_at(w, t) && !minimized_at(w, t))).collect();
        for (p, a) in pages.iter().zip(acc.iter_mut()) {
            if !(p.time <= t && t < p.end) {
                continue;
            }
            a[0] += cell;
            let (displayed, strict) = view[p.wi];
            if displayed == Some(s.windows[p.wi].tabs[p.ti].tab_id) {
                a[1] += cell;
                a[2] += if active { cell } else { 0 };
                a[3] += if strict { cell } else { 0 };
                a[4] += if strict && active { cell } else { 0 };
            }
        }
        t += cell;
    }

    let mut truths: Vec<PageTruth> = Vec::with_capacity(pages.len());
    for (i, p) in pages.iter().enumerate() {
        let w = &s.windows[p.wi];
        let tab = &w.tabs[p.ti];
        let selects = w
            .selects
            .iter()
            .filter(|&&(st, id)| {
                id == tab.tab_id && p.time < st && !tab.loads.iter().any(|l| p.time < l.time && l.time < st)
            })
            .count() as u32;
        let same_tab_prev = pages[..i].iter().rposition(|q| q.wi == p.wi && q.ti == p.ti);
        let (parent, same_tab) = match same_tab_prev {
            Some(j) => (j + 1, true),
            None => {
                let spawner = tab
                    .opener
                    .filter(|_| p.cause == LoadCause::Link)
                    .and_then(|o| pages[..i].iter().rposition(|q| q.wi == p.wi && w.tabs[q.ti].tab_id == o));
                (spawner.map_or(0, |j| j + 1), false)
            }
        };
        let domain_key = hash_url(p.url, key).map(|r| r.h_domain).unwrap_or_default();
        truths.push(PageTruth {
            window_id: w.window_id,
            tab_id: tab.tab_id,
            load_time: p.time,
            domain_key,
            loaded_ms: acc[i][0],
            visible_ms: acc[i][1],
            active_visible_ms: acc[i][2],
            strict_ms: acc[i][3],
            active_strict_ms: acc[i][4],
            selections: u32::from(!p.background) + selects,
            parent,
            same_tab,
        });
    }

    let tabs_used = s.windows.iter().flat_map(|w| &w.tabs).filter(|x| !x.loads.is_empty()).count();
    SessionTruth {
        user_id,
        session_id: s.session_id,
        tz_offset,
        start: s.start,
        length_ms: s.end - s.start,
        window_levels,
        tab_levels,
        tabs_used,
        loads: pages.len(),
        explicit_idle_ms: explicit,
        implicit_idle_ms: thresholds.iter().copied().zip(implicit).collect(),
        pages: truths,
        windows: s
            .windows
            .iter()
            .map(|w| (w.window_id, (w.open, w.close), w.tabs.iter().map(|x| (x.tab_id, (x.open, x.close))).collect()))
            .collect(),
    }
}

/// Median of a sample, with the midpoint mean for even sizes.
pub fn oracle_median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some((v[n / 2 - 1] + v[n / 2]) / 2.0),
    }
}

/// Time-weighted mean of a level distribution.
pub fn level_mean(levels: &BTreeMap<u32, i64>) -> Option<f64> {
    let total: i64 = levels.values().sum();
    if total == 0 {
        return None;
    }
    let weighted: i128 = levels.iter().map(|(&k, &v)| i128::from(k) * i128::from(v)).sum();
    Some(weighted as f64 / total as f64)
}
