//! Parallel browsing: how many windows and tabs are open at the same time,
//! how often pages get (re)selected, and how much tabs are reused.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::event::SessionId;
use crate::interval::Interval;
use crate::session::SessionModel;
use crate::stats::median;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParallelError {
    #[error("no session with at least one page load")]
    NoEligibleSessions,
}

/// Milliseconds during which exactly `k` entities were open, for `k >= 1`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimultaneityDistribution {
    pub time_at: BTreeMap<u32, i64>,
}

impl SimultaneityDistribution {
    /// Length of the union of all lifespans.
    pub fn total(&self) -> i64 {
        self.time_at.values().sum()
    }

    /// Time-weighted mean level; `None` when nothing was ever open.
    pub fn mean(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let weighted: i128 = self.time_at.iter().map(|(&k, &t)| i128::from(k) * i128::from(t)).sum();
        Some(weighted as f64 / total as f64)
    }

    /// Share of open time with at least `k` entities open.
    pub fn share_at_least(&self, k: u32) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let at_least: i64 = self.time_at.range(k.max(1)..).map(|(_, &t)| t).sum();
        at_least as f64 / total as f64
    }

    pub fn merge(&mut self, other: &SimultaneityDistribution) {
        for (&k, &t) in &other.time_at {
            *self.time_at.entry(k).or_default() += t;
        }
    }
}

/// Sweep over interval endpoints, accumulating exact time per level.
pub fn simultaneity<I: IntoIterator<Item = Interval>>(lifespans: I) -> SimultaneityDistribution {
    let mut points: Vec<(i64, i32)> = Vec::new();
    for iv in lifespans.into_iter().filter(|iv| !iv.is_empty()) {
        points.push((iv.start, 1));
        points.push((iv.end, -1));
    }
    points.sort_unstable();
    let mut dist = SimultaneityDistribution::default();
    let mut level: i32 = 0;
    let mut i = 0;
    while i < points.len() {
        let t = points[i].0;
        while i < points.len() && points[i].0 == t {
            level += points[i].1;
            i += 1;
        }
        if let Some(&(next, _)) = points.get(i) {
            if level > 0 && next > t {
                *dist.time_at.entry(level as u32).or_default() += next - t;
            }
        }
    }
    dist
}

/// Window simultaneity pooled over all of the user's sessions.
pub fn window_simultaneity(sessions: &[SessionModel]) -> SimultaneityDistribution {
    simultaneity(sessions.iter().flat_map(|s| s.windows.iter().map(|w| w.lifespan)))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TabSimultaneity {
    pub per_session: Vec<(SessionId, SimultaneityDistribution)>,
    /// Median over sessions of each session's time-weighted mean.
    pub median_of_means: Option<f64>,
    /// All sessions' distributions summed, for share plots.
    pub pooled: SimultaneityDistribution,
}

/// Open tabs per session (all windows pooled), then the median across
/// sessions that had any tab open.
pub fn tab_simultaneity(sessions: &[SessionModel]) -> TabSimultaneity {
    let mut out = TabSimultaneity::default();
    let mut means = Vec::new();
    for s in sessions {
        let d = simultaneity(s.tabs().map(|t| t.lifespan));
        if let Some(m) = d.mean() {
            means.push(m);
        }
        out.pooled.merge(&d);
        out.per_session.push((s.session_id, d));
    }
    out.median_of_means = median(&means);
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TabSelectionStats {
    /// Selections per page view -> number of page views.
    pub histogram: BTreeMap<u32, usize>,
    pub page_views: usize,
    pub never_visible: usize,
}

impl TabSelectionStats {
    pub fn never_visible_fraction(&self) -> f64 {
        if self.page_views == 0 {
            0.0
        } else {
            self.never_visible as f64 / self.page_views as f64
        }
    }
}

pub fn tab_selection_distribution(sessions: &[SessionModel]) -> TabSelectionStats {
    let mut out = TabSelectionStats::default();
    for p in sessions.iter().flat_map(|s| s.tabs()).flat_map(|t| t.page_loads.iter()) {
        *out.histogram.entry(p.selections).or_default() += 1;
        out.page_views += 1;
        if p.visible_time.is_empty() {
            out.never_visible += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionReuse {
    pub session_id: SessionId,
    /// Distinct tabs that hosted at least one page load.
    pub tabs_used: usize,
    pub loads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabReuseStat {
    pub avg_tabs_per_session: f64,
    pub avg_loads_per_session: f64,
    pub ratio: f64,
    pub lower_bound: f64,
    pub per_session: Vec<SessionReuse>,
}

pub fn session_reuse(s: &SessionModel) -> SessionReuse {
    SessionReuse {
        session_id: s.session_id,
        tabs_used: s.tabs().filter(|t| !t.page_loads.is_empty()).count(),
        loads: s.tabs().map(|t| t.page_loads.len()).sum(),
    }
}

/// Median used tabs over median page loads across sessions with at least
/// one load; the bound `1 / loads` is reached when every load reuses the
/// initial tab.
pub fn tab_reuse(sessions: &[SessionModel]) -> Result<TabReuseStat, ParallelError> {
    let per_session: Vec<SessionReuse> = sessions.iter().map(session_reuse).filter(|r| r.loads > 0).collect();
    let tabs: Vec<f64> = per_session.iter().map(|r| r.tabs_used as f64).collect();
    let loads: Vec<f64> = per_session.iter().map(|r| r.loads as f64).collect();
    let (Some(avg_tabs), Some(avg_loads)) = (median(&tabs), median(&loads)) else {
        return Err(ParallelError::NoEligibleSessions);
    };
    Ok(TabReuseStat {
        avg_tabs_per_session: avg_tabs,
        avg_loads_per_session: avg_loads,
        ratio: avg_tabs / avg_loads,
        lower_bound: 1.0 / avg_loads,
        per_session,
    })
}

/// One row of the parallel-browsing report.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelSummary {
    pub mean_windows: Option<f64>,
    pub median_tabs: Option<f64>,
    pub tab_share_at_least: [f64; 4],
    pub never_visible_fraction: f64,
    pub reuse: Option<TabReuseStat>,
}

pub const TAB_SHARE_LEVELS: [u32; 4] = [2, 4, 8, 16];

pub fn summarize(sessions: &[SessionModel]) -> ParallelSummary {
    let tabs = tab_simultaneity(sessions);
    ParallelSummary {
        mean_windows: window_simultaneity(sessions).mean(),
        median_tabs: tabs.median_of_means,
        tab_share_at_least: TAB_SHARE_LEVELS.map(|k| tabs.pooled.share_at_least(k)),
        never_visible_fraction: tab_selection_distribution(sessions).never_visible_fraction(),
        reuse: tab_reuse(sessions).ok(),
    }
}
