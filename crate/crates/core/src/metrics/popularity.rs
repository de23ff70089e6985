//! Website popularity from dwell time.
//!
//! Each page view contributes its loaded time, its focused (visible) time
//! and its focused time while the user was active, grouped by domain digest.
//! Four ratios are derived per user and then combined across users with the
//! median: share of loaded time, share of page loads, focused/loaded and
//! active-focused/focused.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use thiserror::Error;

use crate::event::UserId;
use crate::interval::IntervalSet;
use crate::session::SessionModel;
use crate::stats::{mean, median};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PopularityError {
    #[error("unknown metric {0:?} (expected visit_time_ratio, page_load_ratio, focused_ratio or active_ratio)")]
    UnknownMetric(String),
    #[error("no rows to rank")]
    Empty,
}

/// How focused time is derived from a page view.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FocusMode {
    /// Visible in the selected tab.
    #[default]
    Visible,
    /// Visible, in a focused window that is not minimized.
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DomainTimes {
    pub loaded_ms: i64,
    pub focused_ms: i64,
    pub active_focused_ms: i64,
    pub page_loads: u64,
}

impl DomainTimes {
    fn add(&mut self, o: &DomainTimes) {
        self.loaded_ms += o.loaded_ms;
        self.focused_ms += o.focused_ms;
        self.active_focused_ms += o.active_focused_ms;
        self.page_loads += o.page_loads;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainStats {
    /// Domain digest.
    pub domain_key: String,
    /// Clear-text domain, when the trace carries one.
    pub label: Option<String>,
    pub totals: DomainTimes,
    pub per_user: BTreeMap<UserId, DomainTimes>,
}

impl DomainStats {
    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.domain_key)
    }
}

/// Per-domain sums over every page view of the given sessions (any number
/// of users), sorted by domain key.
pub fn aggregate_domains(sessions: &[SessionModel], mode: FocusMode) -> Vec<DomainStats> {
    let mut by_domain: BTreeMap<String, DomainStats> = BTreeMap::new();
    for s in sessions {
        for w in &s.windows {
            let attention = match mode {
                FocusMode::Visible => None,
                FocusMode::Strict => Some(w.focus_time.difference(&w.minimized_time)),
            };
            for p in w.tabs.iter().flat_map(|t| t.page_loads.iter()) {
                let focused: IntervalSet = match &attention {
                    None => p.visible_time.clone(),
                    Some(a) => p.visible_time.intersection(a),
                };
                let times = DomainTimes {
                    loaded_ms: p.loaded.len(),
                    focused_ms: focused.measure(),
                    active_focused_ms: focused.intersection(&s.active_time).measure(),
                    page_loads: 1,
                };
                let entry = by_domain.entry(p.url.h_domain.clone()).or_insert_with(|| DomainStats {
                    domain_key: p.url.h_domain.clone(),
                    label: None,
                    totals: DomainTimes::default(),
                    per_user: BTreeMap::new(),
                });
                if entry.label.is_none() {
                    entry.label = p.url.plain_domain();
                }
                entry.totals.add(&times);
                entry.per_user.entry(s.user_id).or_default().add(&times);
            }
        }
    }
    by_domain.into_values().collect()
}

/// Associative, commutative merge of two aggregations.
pub fn merge_domain_stats(a: Vec<DomainStats>, b: Vec<DomainStats>) -> Vec<DomainStats> {
    let mut by_domain: BTreeMap<String, DomainStats> = BTreeMap::new();
    for d in a.into_iter().chain(b) {
        match by_domain.get_mut(&d.domain_key) {
            None => {
                by_domain.insert(d.domain_key.clone(), d);
            }
            Some(e) => {
                e.totals.add(&d.totals);
                for (u, t) in &d.per_user {
                    e.per_user.entry(*u).or_default().add(t);
                }
                e.label = match (e.label.take(), d.label) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                };
            }
        }
    }
    by_domain.into_values().collect()
}

/// Every user's totals over all domains: the denominators of the share
/// metrics.
pub fn user_totals(stats: &[DomainStats]) -> BTreeMap<UserId, DomainTimes> {
    let mut out: BTreeMap<UserId, DomainTimes> = BTreeMap::new();
    for d in stats {
        for (u, t) in &d.per_user {
            out.entry(*u).or_default().add(t);
        }
    }
    out
}

/// Domains visited by at least `common_pct` percent of users, then the `top`
/// with the most page loads (ties by key).
pub fn select_domains(stats: &[DomainStats], n_users: usize, top: usize, common_pct: f64) -> Vec<DomainStats> {
    let needed = (common_pct / 100.0 * n_users as f64).ceil() as usize;
    let mut common: Vec<&DomainStats> = stats.iter().filter(|d| d.per_user.len() >= needed.max(1)).collect();
    common.sort_by(|a, b| b.totals.page_loads.cmp(&a.totals.page_loads).then(a.domain_key.cmp(&b.domain_key)));
    common.into_iter().take(top).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    VisitTime,
    PageLoad,
    Focused,
    Active,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::VisitTime, Metric::PageLoad, Metric::Focused, Metric::Active];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::VisitTime => "visit_time_ratio",
            Metric::PageLoad => "page_load_ratio",
            Metric::Focused => "focused_ratio",
            Metric::Active => "active_ratio",
        }
    }
}

impl FromStr for Metric {
    type Err = PopularityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.as_str().trim_end_matches("_ratio") == s)
            .ok_or_else(|| PopularityError::UnknownMetric(s.to_string()))
    }
}

/// One user's four ratios for one domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserRatios {
    pub visit_time_ratio: f64,
    pub page_load_ratio: f64,
    pub focused_ratio: f64,
    pub active_ratio: f64,
}

impl UserRatios {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::VisitTime => self.visit_time_ratio,
            Metric::PageLoad => self.page_load_ratio,
            Metric::Focused => self.focused_ratio,
            Metric::Active => self.active_ratio,
        }
    }
}

fn ratio(num: i64, den: i64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-domain input to [`combine_user_ratios`]: ratios of users who
/// visited the domain, plus how many users exist in total (non-visitors
/// count as a zero share).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainRatioInput {
    pub domain_key: String,
    pub label: Option<String>,
    pub n_users_total: usize,
    pub visitors: Vec<(UserId, UserRatios)>,
}

pub fn user_ratios(stats: &[DomainStats], totals: &BTreeMap<UserId, DomainTimes>) -> Vec<DomainRatioInput> {
    stats
        .iter()
        .map(|d| DomainRatioInput {
            domain_key: d.domain_key.clone(),
            label: d.label.clone(),
            n_users_total: totals.len(),
            visitors: d
                .per_user
                .iter()
                .map(|(u, t)| {
                    let tot = totals.get(u).copied().unwrap_or_default();
                    (
                        *u,
                        UserRatios {
                            visit_time_ratio: ratio(t.loaded_ms, tot.loaded_ms),
                            page_load_ratio: ratio(t.page_loads as i64, tot.page_loads as i64),
                            focused_ratio: ratio(t.focused_ms, t.loaded_ms),
                            active_ratio: ratio(t.active_focused_ms, t.focused_ms),
                        },
                    )
                })
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub domain_key: String,
    pub label: Option<String>,
    pub visit_time_ratio: f64,
    pub page_load_ratio: f64,
    pub focused_ratio: f64,
    pub active_ratio: f64,
    /// Cross-user means, in [`Metric::ALL`] order, for comparison with the
    /// medians above.
    pub means: [f64; 4],
    pub n_users: usize,
}

impl RankingRow {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::VisitTime => self.visit_time_ratio,
            Metric::PageLoad => self.page_load_ratio,
            Metric::Focused => self.focused_ratio,
            Metric::Active => self.active_ratio,
        }
    }

    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.domain_key)
    }
}

/// Medians across users: share metrics over all users (zero for users who
/// never visited), focus metrics over visitors.
pub fn combine_user_ratios(inputs: &[DomainRatioInput]) -> Vec<RankingRow> {
    inputs
        .iter()
        .map(|d| {
            let zeros = d.n_users_total.saturating_sub(d.visitors.len());
            let with_zeros = |m: Metric| -> Vec<f64> {
                d.visitors.iter().map(|(_, r)| r.get(m)).chain(std::iter::repeat_n(0.0, zeros)).collect()
            };
            let visitors_only = |m: Metric| -> Vec<f64> { d.visitors.iter().map(|(_, r)| r.get(m)).collect() };
            let series = Metric::ALL.map(|m| match m {
                Metric::VisitTime | Metric::PageLoad => with_zeros(m),
                Metric::Focused | Metric::Active => visitors_only(m),
            });
            let med = |i: usize| median(&series[i]).unwrap_or(0.0);
            RankingRow {
                domain_key: d.domain_key.clone(),
                label: d.label.clone(),
                visit_time_ratio: med(0),
                page_load_ratio: med(1),
                focused_ratio: med(2),
                active_ratio: med(3),
                means: [0, 1, 2, 3].map(|i| mean(&series[i]).unwrap_or(0.0)),
                n_users: d.visitors.len(),
            }
        })
        .collect()
}

pub fn popularity_ratios(stats: &[DomainStats], totals: &BTreeMap<UserId, DomainTimes>) -> Vec<RankingRow> {
    combine_user_ratios(&user_ratios(stats, totals))
}

/// Descending by `metric`, ties by domain key ascending.
pub fn rank(rows: &[RankingRow], metric: &str) -> Result<Vec<RankingRow>, PopularityError> {
    let m: Metric = metric.parse()?;
    if rows.is_empty() {
        return Err(PopularityError::Empty);
    }
    let mut out = rows.to_vec();
    out.sort_by(|a, b| b.get(m).total_cmp(&a.get(m)).then_with(|| a.domain_key.cmp(&b.domain_key)));
    Ok(out)
}

/// Users present in the aggregation.
pub fn users_of(stats: &[DomainStats]) -> BTreeSet<UserId> {
    stats.iter().flat_map(|d| d.per_user.keys().copied()).collect()
}
