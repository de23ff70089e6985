//! End-to-end report: read, clean, sessionize, analyze, write.
//!
//! Every artifact is rendered to bytes first and written by a single
//! writer; row order is fixed (users ascending, domains by rank), so
//! identical input and configuration give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::cleaning::{clean, CleanOutput, CleaningError, CleaningReport};
use crate::event::{EventRecord, UserId};
use crate::io::{self, ReadError};
use crate::metrics::idle::{self, IdleMeasure, IdleProfile, DEFAULT_HOURLY_FLOOR, DEFAULT_THRESHOLDS_MS};
use crate::metrics::parallel::{self, TAB_SHARE_LEVELS};
use crate::metrics::popularity::{self, FocusMode, Metric, PopularityError, RankingRow};
use crate::navgraph::{build_navtree, NavTree};
use crate::session::{build_sessions, Anomaly, SessionModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Read(#[from] ReadError),
    #[error("no events")]
    NoEvents,
    #[error("cleaning: {0}")]
    Cleaning(#[from] CleaningError),
    #[error("popularity: {0}")]
    Popularity(#[from] PopularityError),
    #[error("output {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    /// 1 usage, 2 data, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Read(ReadError::Io { .. }) | PipelineError::Write { .. } | PipelineError::Csv(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub thresholds_ms: Vec<i64>,
    /// `None` keeps every user.
    pub top_users: Option<usize>,
    pub top_domains: usize,
    pub common_pct: f64,
    pub strict_focus: bool,
    pub seed: u64,
    /// Worker threads; 0 picks the number of cores.
    pub jobs: usize,
    pub hourly_floor: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::new(),
            output: PathBuf::new(),
            thresholds_ms: DEFAULT_THRESHOLDS_MS.to_vec(),
            top_users: None,
            top_domains: 100,
            common_pct: 80.0,
            strict_focus: false,
            seed: 0,
            jobs: 0,
            hourly_floor: DEFAULT_HOURLY_FLOOR,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        validate_thresholds(&self.thresholds_ms)?;
        validate_pct(self.common_pct)?;
        if self.top_users == Some(0) {
            return Err(PipelineError::Config("top_users must be at least 1".into()));
        }
        Ok(())
    }

    pub fn focus_mode(&self) -> FocusMode {
        if self.strict_focus {
            FocusMode::Strict
        } else {
            FocusMode::Visible
        }
    }
}

pub fn validate_thresholds(t: &[i64]) -> Result<(), PipelineError> {
    if t.is_empty() {
        return Err(PipelineError::Config("at least one idle threshold is required".into()));
    }
    if let Some(x) = t.iter().find(|&&x| x < 1000) {
        return Err(PipelineError::Config(format!("threshold {x} ms is below 1000 ms")));
    }
    if t.windows(2).any(|p| p[0] >= p[1]) {
        return Err(PipelineError::Config(format!("thresholds must be strictly ascending, got {t:?}")));
    }
    Ok(())
}

pub fn validate_pct(p: f64) -> Result<(), PipelineError> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(PipelineError::Config(format!("percentage {p} outside (0, 100]")));
    }
    Ok(())
}

/// Sessions of one user, ordered by start.
pub type UserSessions = BTreeMap<UserId, Vec<SessionModel>>;

pub fn read_input(path: &Path) -> Result<Vec<EventRecord>, PipelineError> {
    let events = io::read_events(path)?;
    if events.is_empty() {
        return Err(PipelineError::NoEvents);
    }
    Ok(events)
}

pub fn clean_events(events: Vec<EventRecord>, top_users: Option<usize>) -> Result<CleanOutput, PipelineError> {
    Ok(clean(events, top_users.unwrap_or(usize::MAX))?)
}

/// Builds every user's sessions in parallel.
pub fn sessionize(events: &[EventRecord]) -> (UserSessions, Vec<Anomaly>) {
    let mut by_user: BTreeMap<UserId, Vec<EventRecord>> = BTreeMap::new();
    for e in events {
        by_user.entry(e.user_id).or_default().push(e.clone());
    }
    let built: Vec<(UserId, crate::session::BuildOutput)> =
        by_user.into_par_iter().map(|(u, evs)| (u, build_sessions(&evs))).collect();
    let mut anomalies = Vec::new();
    let mut users = BTreeMap::new();
    for (u, b) in built {
        anomalies.extend(b.anomalies);
        users.insert(u, b.sessions);
    }
    (users, anomalies)
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, PipelineError> {
    w.into_inner().map_err(|e| PipelineError::Csv(e.into_error().into()))
}

pub const PARALLEL_COLUMNS: [&str; 10] = [
    "user_id",
    "mean_windows",
    "median_tabs",
    "p_ge_2_tabs",
    "p_ge_4",
    "p_ge_8",
    "p_ge_16",
    "never_visible_frac",
    "reuse_ratio",
    "reuse_bound",
];

pub fn parallel_csv(users: &UserSessions) -> Result<Vec<u8>, PipelineError> {
    let rows: Vec<(UserId, parallel::ParallelSummary)> =
        users.par_iter().map(|(u, s)| (*u, parallel::summarize(s))).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PARALLEL_COLUMNS)?;
    for (u, r) in rows {
        let mut rec = vec![u.to_string(), opt(r.mean_windows), opt(r.median_tabs)];
        rec.extend(r.tab_share_at_least.iter().map(|&x| f(x)));
        rec.push(f(r.never_visible_fraction));
        rec.push(opt(r.reuse.as_ref().map(|x| x.ratio)));
        rec.push(opt(r.reuse.as_ref().map(|x| x.lower_bound)));
        w.write_record(&rec)?;
    }
    debug_assert_eq!(TAB_SHARE_LEVELS, [2, 4, 8, 16]);
    finish(w)
}

pub fn idle_profiles(users: &UserSessions, thresholds: &[i64]) -> Vec<(UserId, Vec<IdleProfile>)> {
    users.par_iter().map(|(u, ss)| (*u, ss.iter().map(|s| idle::idle_profile(s, thresholds)).collect())).collect()
}

pub fn idle_columns(thresholds: &[i64]) -> Vec<String> {
    let mut cols = vec!["user_id".to_string(), "median_session_len".into(), "explicit_idle_ratio".into()];
    cols.extend(thresholds.iter().map(|t| format!("implicit_idle_ratio_{}s", t / 1000)));
    cols
}

pub fn idle_csv(profiles: &[(UserId, Vec<IdleProfile>)], thresholds: &[i64]) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(idle_columns(thresholds))?;
    for (u, ps) in profiles {
        let Some(s) = idle::summarize_user(*u, ps) else { continue };
        let mut rec =
            vec![u.to_string(), f(s.median_session_len), opt(s.median_idle_ratio.get(&IdleMeasure::Explicit).copied())];
        rec.extend(thresholds.iter().map(|&t| opt(s.median_idle_ratio.get(&IdleMeasure::Implicit(t)).copied())));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub const HOURLY_COLUMNS: [&str; 4] = ["hour", "n_sessions", "median_idle_ratio", "low_confidence"];

pub fn hourly_csv(
    profiles: &[(UserId, Vec<IdleProfile>)],
    measure: IdleMeasure,
    floor: usize,
) -> Result<Vec<u8>, PipelineError> {
    let all: Vec<IdleProfile> = profiles.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HOURLY_COLUMNS)?;
    for b in idle::hourly_idle_profile(&all, measure, floor) {
        w.write_record([
            b.hour.to_string(),
            b.n_sessions.to_string(),
            opt(b.median_idle_ratio),
            b.low_confidence.to_string(),
        ])?;
    }
    finish(w)
}

/// Per-user aggregation merged across users, then common-domain selection
/// and ranking by `metric` (`all` ranks by visit time).
pub fn popularity_rows(
    users: &UserSessions,
    mode: FocusMode,
    top: usize,
    common_pct: f64,
    metric: &str,
) -> Result<Vec<RankingRow>, PipelineError> {
    let stats = users
        .par_iter()
        .map(|(_, ss)| popularity::aggregate_domains(ss, mode))
        .reduce(Vec::new, popularity::merge_domain_stats);
    let totals = popularity::user_totals(&stats);
    let selected = popularity::select_domains(&stats, totals.len(), top, common_pct);
    let rows = popularity::popularity_ratios(&selected, &totals);
    if rows.is_empty() {
        return Ok(rows);
    }
    let metric = if metric == "all" { Metric::VisitTime.as_str() } else { metric };
    Ok(popularity::rank(&rows, metric)?)
}

pub const POPULARITY_COLUMNS: [&str; 6] =
    ["domain", "visit_time_ratio", "page_load_ratio", "focused_ratio", "active_ratio", "n_users"];

pub fn popularity_csv(rows: &[RankingRow]) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POPULARITY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.display_name().to_string(),
            f(r.visit_time_ratio),
            f(r.page_load_ratio),
            f(r.focused_ratio),
            f(r.active_ratio),
            r.n_users.to_string(),
        ])?;
    }
    finish(w)
}

/// Cross-user means in the same row order as [`popularity_csv`].
pub fn popularity_means_csv(rows: &[RankingRow]) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POPULARITY_COLUMNS)?;
    for r in rows {
        let mut rec = vec![r.display_name().to_string()];
        rec.extend(r.means.iter().map(|&x| f(x)));
        rec.push(r.n_users.to_string());
        w.write_record(&rec)?;
    }
    finish(w)
}

pub const NAVGRAPH_COLUMNS: [&str; 5] = ["user_id", "session_id", "n_nodes", "branching_factor", "avg_root_distance"];

pub fn navtrees(users: &UserSessions) -> Vec<(UserId, NavTree)> {
    users.par_iter().flat_map_iter(|(u, ss)| ss.iter().map(|s| (*u, build_navtree(s)))).collect()
}

pub fn navgraph_csv(trees: &[(UserId, NavTree)]) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(NAVGRAPH_COLUMNS)?;
    for (u, t) in trees {
        w.write_record([
            u.to_string(),
            t.session_id.to_string(),
            t.len().to_string(),
            f(t.branching_factor()),
            f(t.avg_root_distance()),
        ])?;
    }
    finish(w)
}

pub fn write_artifact(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    io::write_bytes(path, bytes).map_err(|source| PipelineError::Write { path: path.to_path_buf(), source })
}

fn summary(
    report: &CleaningReport,
    users: &UserSessions,
    anomalies: usize,
    profiles: &[(UserId, Vec<IdleProfile>)],
    rows: &[RankingRow],
    config: &PipelineConfig,
) -> String {
    let all: Vec<SessionModel> = users.values().flatten().cloned().collect();
    let mut out = String::new();
    out.push_str("[cleaning]\n");
    out.push_str(&report.to_key_value());
    out.push_str("\n[sessions]\n");
    writeln!(out, "users={}", users.len()).unwrap();
    writeln!(out, "sessions={}", all.len()).unwrap();
    writeln!(out, "page_views={}", all.iter().map(|s| s.page_views().len()).sum::<usize>()).unwrap();
    writeln!(out, "anomalies={anomalies}").unwrap();

    out.push_str("\n[parallel]\n");
    let p = parallel::summarize(&all);
    writeln!(out, "mean_windows={}", opt(p.mean_windows)).unwrap();
    writeln!(out, "median_tabs={}", opt(p.median_tabs)).unwrap();
    for (k, v) in TAB_SHARE_LEVELS.iter().zip(p.tab_share_at_least) {
        writeln!(out, "p_ge_{k}_tabs={}", f(v)).unwrap();
    }
    writeln!(out, "never_visible_frac={}", f(p.never_visible_fraction)).unwrap();
    writeln!(out, "reuse_ratio={}", opt(p.reuse.as_ref().map(|r| r.ratio))).unwrap();
    writeln!(out, "reuse_bound={}", opt(p.reuse.as_ref().map(|r| r.lower_bound))).unwrap();

    out.push_str("\n[idle]\n");
    match idle::idle_vs_length(profiles) {
        Ok(t) => {
            for (m, rho) in &t.spearman {
                writeln!(out, "spearman_len_vs_{m}={}", opt(*rho)).unwrap();
            }
        }
        Err(e) => writeln!(out, "spearman=unavailable ({e})").unwrap(),
    }
    writeln!(out, "thresholds_ms={}", config.thresholds_ms.iter().map(i64::to_string).collect::<Vec<_>>().join(","))
        .unwrap();

    out.push_str("\n[popularity]\n");
    writeln!(out, "focus_mode={}", if config.strict_focus { "strict" } else { "visible" }).unwrap();
    writeln!(out, "common_pct={}", config.common_pct).unwrap();
    writeln!(out, "domains_ranked={}", rows.len()).unwrap();
    for m in Metric::ALL {
        let order = popularity::rank(rows, m.as_str()).unwrap_or_default();
        let names: Vec<&str> = order.iter().take(5).map(|r| r.display_name()).collect();
        writeln!(out, "top_by_{}={}", m.as_str(), names.join(">")).unwrap();
    }
    out
}

/// Names of the files written by [`run_report`].
pub const REPORT_FILES: [&str; 8] = [
    "cleaning_report.txt",
    "quarantine.ndjsonl",
    "parallel.csv",
    "idle.csv",
    "idle_hourly.csv",
    "popularity.csv",
    "popularity_means.csv",
    "navgraph.csv",
];

/// Runs the whole pipeline and writes every artifact plus `summary.txt`
/// into `config.output`. Returns the written paths.
pub fn run_report(config: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let events = read_input(&config.input)?;
        let cleaned = clean_events(events, config.top_users)?;
        if cleaned.events.is_empty() {
            return Err(PipelineError::NoEvents);
        }
        let (users, anomalies) = sessionize(&cleaned.events);
        let profiles = idle_profiles(&users, &config.thresholds_ms);
        let rows = popularity_rows(&users, config.focus_mode(), config.top_domains, config.common_pct, "all")?;
        let trees = navtrees(&users);

        let artifacts: Vec<(&str, Vec<u8>)> = vec![
            (REPORT_FILES[0], cleaned.report.to_key_value().into_bytes()),
            (REPORT_FILES[1], io::encode_events(&cleaned.quarantine)),
            (REPORT_FILES[2], parallel_csv(&users)?),
            (REPORT_FILES[3], idle_csv(&profiles, &config.thresholds_ms)?),
            (REPORT_FILES[4], hourly_csv(&profiles, IdleMeasure::Explicit, config.hourly_floor)?),
            (REPORT_FILES[5], popularity_csv(&rows)?),
            (REPORT_FILES[6], popularity_means_csv(&rows)?),
            (REPORT_FILES[7], navgraph_csv(&trees)?),
            ("summary.txt", summary(&cleaned.report, &users, anomalies.len(), &profiles, &rows, config).into_bytes()),
        ];
        let mut written = Vec::new();
        for (name, bytes) in artifacts {
            let path = config.output.join(name);
            write_artifact(&path, &bytes)?;
            written.push(path);
        }
        tracing::info!(files = written.len(), output = %config.output.display(), "report written");
        Ok(written)
    })
}
