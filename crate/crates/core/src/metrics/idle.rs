//! Passive browsing: idle time per session.
//!
//! Two measures are supported. *Explicit* idle time comes from the browser's
//! activity events and is global across windows. *Implicit* idle time is
//! inferred per window from gaps between consecutive events: a gap longer
//! than the threshold counts in full. The user is implicitly idle at an
//! instant when at least one window is open and every open window is idle.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::event::{SessionId, UserId};
use crate::interval::{Interval, IntervalSet};
use crate::session::{SessionModel, WindowModel};
use crate::stats::{median, median_i64, spearman};

pub const DEFAULT_THRESHOLDS_MS: [i64; 3] = [60_000, 240_000, 960_000];
pub const HOURLY_MAX_SESSION_MS: i64 = 3_600_000;
pub const DEFAULT_HOURLY_FLOOR: usize = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdleError {
    #[error("insufficient data: need at least 2 sessions, got {0}")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IdleMeasure {
    Explicit,
    /// Threshold in milliseconds.
    Implicit(i64),
}

impl std::fmt::Display for IdleMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdleMeasure::Explicit => f.write_str("explicit"),
            IdleMeasure::Implicit(t) => write!(f, "implicit_{}s", t / 1000),
        }
    }
}

/// Session length minus active time.
pub fn explicit_idle(session: &SessionModel) -> i64 {
    session.length() - session.active_time.measure()
}

/// Gaps longer than `threshold_ms` between consecutive events of one window.
pub fn window_idle_spans(window: &WindowModel, threshold_ms: i64) -> IntervalSet {
    window.event_times.windows(2).filter(|p| p[1] - p[0] > threshold_ms).map(|p| Interval::new(p[0], p[1])).collect()
}

pub fn implicit_idle_set(session: &SessionModel, threshold_ms: i64) -> IntervalSet {
    let open: IntervalSet = session.windows.iter().map(|w| w.lifespan).collect();
    let mut busy = IntervalSet::new();
    for w in &session.windows {
        let b = IntervalSet::from_interval(w.lifespan).difference(&window_idle_spans(w, threshold_ms));
        busy = busy.union(&b);
    }
    open.difference(&busy).clip(session.lifespan)
}

pub fn implicit_idle(session: &SessionModel, threshold_ms: i64) -> i64 {
    implicit_idle_set(session, threshold_ms).measure()
}

pub fn idle_for(session: &SessionModel, measure: IdleMeasure) -> i64 {
    match measure {
        IdleMeasure::Explicit => explicit_idle(session),
        IdleMeasure::Implicit(t) => implicit_idle(session, t),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdleProfile {
    pub user_id: UserId,
    pub session_id: SessionId,
    pub session_length_ms: i64,
    pub local_start_ms: i64,
    pub explicit_idle_ms: i64,
    /// `(threshold, idle)` pairs, thresholds ascending.
    pub implicit_idle_ms: Vec<(i64, i64)>,
}

impl IdleProfile {
    pub fn idle_ms(&self, measure: IdleMeasure) -> Option<i64> {
        match measure {
            IdleMeasure::Explicit => Some(self.explicit_idle_ms),
            IdleMeasure::Implicit(t) => self.implicit_idle_ms.iter().find(|(th, _)| *th == t).map(|&(_, v)| v),
        }
    }

    pub fn idle_ratio(&self, measure: IdleMeasure) -> Option<f64> {
        let idle = self.idle_ms(measure)?;
        Some(if self.session_length_ms == 0 { 0.0 } else { idle as f64 / self.session_length_ms as f64 })
    }

    pub fn activity_ratio(&self, measure: IdleMeasure) -> Option<f64> {
        self.idle_ratio(measure).map(|r| 1.0 - r)
    }

    pub fn measures(&self) -> impl Iterator<Item = IdleMeasure> + '_ {
        std::iter::once(IdleMeasure::Explicit)
            .chain(self.implicit_idle_ms.iter().map(|&(t, _)| IdleMeasure::Implicit(t)))
    }

    pub fn local_hour(&self) -> u8 {
        (self.local_start_ms.rem_euclid(86_400_000) / 3_600_000) as u8
    }
}

pub fn idle_profile(session: &SessionModel, thresholds: &[i64]) -> IdleProfile {
    IdleProfile {
        user_id: session.user_id,
        session_id: session.session_id,
        session_length_ms: session.length(),
        local_start_ms: session.local_start(),
        explicit_idle_ms: explicit_idle(session),
        implicit_idle_ms: thresholds.iter().map(|&t| (t, implicit_idle(session, t))).collect(),
    }
}

/// Per-user medians over sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct UserIdleSummary {
    pub user_id: UserId,
    pub n_sessions: usize,
    pub median_session_len: f64,
    /// Median idle time per measure.
    pub median_idle: BTreeMap<IdleMeasure, f64>,
    /// Median of per-session idle ratios per measure.
    pub median_idle_ratio: BTreeMap<IdleMeasure, f64>,
}

pub fn summarize_user(user_id: UserId, profiles: &[IdleProfile]) -> Option<UserIdleSummary> {
    let first = profiles.first()?;
    let lengths: Vec<i64> = profiles.iter().map(|p| p.session_length_ms).collect();
    let mut median_idle = BTreeMap::new();
    let mut median_idle_ratio = BTreeMap::new();
    for m in first.measures() {
        let idle: Vec<i64> = profiles.iter().filter_map(|p| p.idle_ms(m)).collect();
        let ratios: Vec<f64> = profiles.iter().filter_map(|p| p.idle_ratio(m)).collect();
        median_idle.insert(m, median_i64(&idle)?);
        median_idle_ratio.insert(m, median(&ratios)?);
    }
    Some(UserIdleSummary {
        user_id,
        n_sessions: profiles.len(),
        median_session_len: median_i64(&lengths)?,
        median_idle,
        median_idle_ratio,
    })
}

/// One point of the session-length vs. activity-ratio scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub user_id: UserId,
    pub session_id: SessionId,
    pub session_length_ms: i64,
    pub activity_ratio: BTreeMap<IdleMeasure, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub users: Vec<UserIdleSummary>,
    pub scatter: Vec<ScatterPoint>,
    /// Spearman correlation over users between median session length and
    /// median idle time, per measure. `None` when undefined.
    pub spearman: BTreeMap<IdleMeasure, Option<f64>>,
}

pub fn idle_vs_length(users: &[(UserId, Vec<IdleProfile>)]) -> Result<CorrelationTable, IdleError> {
    let n: usize = users.iter().map(|(_, p)| p.len()).sum();
    if n < 2 {
        return Err(IdleError::InsufficientData(n));
    }
    let summaries: Vec<UserIdleSummary> = users.iter().filter_map(|(u, p)| summarize_user(*u, p)).collect();
    let scatter = users
        .iter()
        .flat_map(|(_, ps)| ps.iter())
        .map(|p| ScatterPoint {
            user_id: p.user_id,
            session_id: p.session_id,
            session_length_ms: p.session_length_ms,
            activity_ratio: p.measures().filter_map(|m| Some((m, p.activity_ratio(m)?))).collect(),
        })
        .collect();
    let mut corr = BTreeMap::new();
    if let Some(first) = users.iter().find_map(|(_, p)| p.first()) {
        let lengths: Vec<f64> = summaries.iter().map(|s| s.median_session_len).collect();
        for m in first.measures() {
            let idle: Vec<f64> = summaries.iter().filter_map(|s| s.median_idle.get(&m).copied()).collect();
            let rho = if idle.len() == lengths.len() { spearman(&lengths, &idle) } else { None };
            corr.insert(m, rho);
        }
    }
    Ok(CorrelationTable { users: summaries, scatter, spearman: corr })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourBin {
    pub hour: u8,
    pub n_sessions: usize,
    pub median_idle_ratio: Option<f64>,
    pub low_confidence: bool,
}

/// Sessions shorter than one hour, binned by local start hour; bins with
/// fewer than `floor` sessions are flagged low-confidence.
pub fn hourly_idle_profile(profiles: &[IdleProfile], measure: IdleMeasure, floor: usize) -> Vec<HourBin> {
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); 24];
    for p in profiles.iter().filter(|p| p.session_length_ms < HOURLY_MAX_SESSION_MS) {
        if let Some(r) = p.idle_ratio(measure) {
            bins[usize::from(p.local_hour())].push(r);
        }
    }
    bins.into_iter()
        .enumerate()
        .map(|(h, ratios)| HourBin {
            hour: h as u8,
            n_sessions: ratios.len(),
            median_idle_ratio: median(&ratios),
            low_confidence: ratios.len() < floor,
        })
        .collect()
}
