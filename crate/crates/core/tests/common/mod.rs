//! Checks shared by the integration tests and the acceptance runner. Each
//! returns a one-line detail on success and the first discrepancy on
//! failure.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::future::IntoFuture;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use browsetrace::cleaning::{self, clean};
use browsetrace::event::{parse_event, serialize_event, sort_by_time, EventKind, EventRecord, UserId};
use browsetrace::interval::{Interval, IntervalSet};
use browsetrace::metrics::idle::{self, IdleMeasure};
use browsetrace::metrics::parallel::{self, simultaneity, tab_simultaneity};
use browsetrace::metrics::popularity::{self, DomainStats, DomainTimes, FocusMode, Metric, RankingRow};
use browsetrace::navgraph::{build_navtree, EdgeKind};
use browsetrace::pipeline::{self, PipelineConfig};
use browsetrace::session::SessionModel;
use browsetrace::store::EventStore;
use browsetrace::synth::{self, RandomParams, SessionTruth, TraceSchedule};
use browsetrace::{io, server};

pub type Check = Result<String, String>;

pub const THRESHOLDS: [i64; 3] = [60_000, 240_000, 960_000];

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($arg)+)),
        }
    };
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr, $($arg:tt)+) => {
        if $a != $b {
            return Err(format!("{}: {:?} != {:?}", format!($($arg)+), $a, $b));
        }
    };
}

/// Schedule, its event stream and the reconstructed sessions.
pub struct Trace {
    pub schedule: TraceSchedule,
    pub seed: u64,
    pub events: Vec<EventRecord>,
    pub users: pipeline::UserSessions,
}

pub fn trace(schedule: TraceSchedule, seed: u64) -> Trace {
    let events = synth::generate(&schedule, seed).expect("schedule validates");
    let (users, anomalies) = pipeline::sessionize(&events);
    assert!(anomalies.is_empty(), "generated stream produced anomalies: {:?}", anomalies.first());
    Trace { schedule, seed, events, users }
}

pub fn random_trace(seed: u64) -> Trace {
    trace(synth::random_schedule(seed, &RandomParams::default()), seed)
}

pub fn sessions(t: &Trace) -> impl Iterator<Item = &SessionModel> {
    t.users.values().flatten()
}

fn model<'a>(t: &'a Trace, truth: &SessionTruth) -> Result<&'a SessionModel, String> {
    t.users
        .get(&truth.user_id)
        .and_then(|ss| ss.iter().find(|s| s.session_id == truth.session_id))
        .ok_or_else(|| format!("session {}/{} missing from model", truth.user_id, truth.session_id))
}

fn attention(s: &SessionModel, window: u64) -> IntervalSet {
    let w = s.window(window).expect("window exists");
    w.focus_time.difference(&w.minimized_time)
}

/// Compares one trace's metrics with the schedule oracle.
pub fn compare_with_oracle(t: &Trace) -> Result<usize, String> {
    let truths = synth::ground_truth(&t.schedule, t.seed, &THRESHOLDS);
    let n_model: usize = sessions(t).count();
    ensure_eq!(n_model, truths.len(), "session count");
    let mut domain_truth: BTreeMap<(String, UserId), [DomainTimes; 2]> = BTreeMap::new();
    for truth in &truths {
        let s = model(t, truth)?;
        let at = format!("seed {} user {} session {}", t.seed, truth.user_id, truth.session_id);
        ensure_eq!(s.lifespan, Interval::new(truth.start, truth.start + truth.length_ms), "{at}: lifespan");

        let mut windows: Vec<_> = s
            .windows
            .iter()
            .map(|w| {
                let mut tabs: Vec<_> = w.tabs.iter().map(|x| (x.tab_id, (x.lifespan.start, x.lifespan.end))).collect();
                tabs.sort();
                (w.window_id, (w.lifespan.start, w.lifespan.end), tabs)
            })
            .collect();
        windows.sort();
        let mut expect = truth.windows.clone();
        expect.iter_mut().for_each(|w| w.2.sort());
        expect.sort();
        ensure_eq!(windows, expect, "{at}: window and tab lifespans");

        let wd = simultaneity(s.windows.iter().map(|w| w.lifespan));
        ensure_eq!(wd.time_at, truth.window_levels, "{at}: window simultaneity");
        let td = &tab_simultaneity(std::slice::from_ref(s)).per_session[0].1;
        ensure_eq!(td.time_at, truth.tab_levels, "{at}: tab simultaneity");
        ensure_eq!(wd.mean(), synth::level_mean(&truth.window_levels), "{at}: mean windows");

        let r = parallel::session_reuse(s);
        ensure_eq!((r.tabs_used, r.loads), (truth.tabs_used, truth.loads), "{at}: reuse");

        ensure_eq!(idle::explicit_idle(s), truth.explicit_idle_ms, "{at}: explicit idle");
        for &(th, ms) in &truth.implicit_idle_ms {
            ensure_eq!(idle::implicit_idle(s, th), ms, "{at}: implicit idle at {th} ms");
        }

        let pages = s.page_views();
        ensure_eq!(pages.len(), truth.pages.len(), "{at}: page count");
        for (p, e) in pages.iter().zip(&truth.pages) {
            let pat = format!("{at} page {}", p.seq);
            ensure_eq!((p.window_id, p.tab_id, p.load_time), (e.window_id, e.tab_id, e.load_time), "{pat}: identity");
            ensure_eq!(p.url.h_domain, e.domain_key, "{pat}: domain");
            ensure_eq!(p.loaded.len(), e.loaded_ms, "{pat}: loaded");
            ensure_eq!(p.visible_time.measure(), e.visible_ms, "{pat}: visible");
            ensure_eq!(
                p.visible_time.intersection(&s.active_time).measure(),
                e.active_visible_ms,
                "{pat}: active visible"
            );
            let strict = p.visible_time.intersection(&attention(s, p.window_id));
            ensure_eq!(strict.measure(), e.strict_ms, "{pat}: strict");
            ensure_eq!(strict.intersection(&s.active_time).measure(), e.active_strict_ms, "{pat}: active strict");
            ensure_eq!(p.selections, e.selections, "{pat}: selections");

            let d = domain_truth.entry((e.domain_key.clone(), truth.user_id)).or_default();
            for (slot, (f, af)) in [(0, (e.visible_ms, e.active_visible_ms)), (1, (e.strict_ms, e.active_strict_ms))] {
                d[slot].loaded_ms += e.loaded_ms;
                d[slot].focused_ms += f;
                d[slot].active_focused_ms += af;
                d[slot].page_loads += 1;
            }
        }

        let tree = build_navtree(s);
        ensure_eq!(tree.len(), truth.nav_nodes(), "{at}: nav nodes");
        ensure_eq!(tree.internal_degree().1, truth.nav_internal(), "{at}: nav internal nodes");
        ensure_eq!(tree.depth_sum(), truth.nav_depth_sum(), "{at}: nav depth sum");
        for (i, e) in truth.pages.iter().enumerate() {
            let kind = if e.same_tab { EdgeKind::SameTab } else { EdgeKind::NewTab };
            ensure_eq!(tree.nodes[i + 1].parent, Some((e.parent, kind)), "{at}: nav parent of page {i}");
        }
    }

    for (slot, mode) in [(0, FocusMode::Visible), (1, FocusMode::Strict)] {
        let all: Vec<SessionModel> = sessions(t).cloned().collect();
        let stats = popularity::aggregate_domains(&all, mode);
        let got: BTreeMap<(String, UserId), DomainTimes> =
            stats.iter().flat_map(|d| d.per_user.iter().map(|(u, x)| ((d.domain_key.clone(), *u), *x))).collect();
        let want: BTreeMap<(String, UserId), DomainTimes> =
            domain_truth.iter().map(|(k, v)| (k.clone(), v[slot])).collect();
        ensure_eq!(got, want, "seed {}: domain times ({mode:?})", t.seed);
    }

    for (u, ss) in &t.users {
        let pooled = parallel::window_simultaneity(ss);
        let mut want = BTreeMap::new();
        for truth in truths.iter().filter(|x| x.user_id == *u) {
            for (&k, &v) in &truth.window_levels {
                *want.entry(k).or_insert(0) += v;
            }
        }
        ensure_eq!(pooled.time_at, want, "seed {}: user {u} pooled window simultaneity", t.seed);
    }
    Ok(truths.len())
}

pub fn oracle_equivalence(n: u64) -> Check {
    let started = Instant::now();
    let mut sessions = 0;
    for seed in 0..n {
        sessions += compare_with_oracle(&random_trace(seed))?;
    }
    for (name, _) in synth::PRESETS {
        sessions += compare_with_oracle(&trace(synth::preset(name).unwrap(), 0))?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{n} schedules + presets, {sessions} sessions exact in {secs:.2} s"))
}

/// Per-user, per-metric values of the popularity fixture, in percent.
pub const FIXTURE: [(&str, [f64; 4]); 5] = [
    ("google.com", [10.5, 10.7, 19.7, 36.2]),
    ("facebook.com", [6.4, 14.3, 54.5, 42.1]),
    ("youtube.com", [4.3, 5.5, 35.8, 32.8]),
    ("linkedin.com", [1.2, 2.2, 34.0, 50.0]),
    ("twitter.com", [0.8, 1.4, 41.0, 40.2]),
];

pub const EXPECTED_ORDER: [(Metric, [&str; 5]); 4] = [
    (Metric::VisitTime, ["google.com", "facebook.com", "youtube.com", "linkedin.com", "twitter.com"]),
    (Metric::PageLoad, ["facebook.com", "google.com", "youtube.com", "linkedin.com", "twitter.com"]),
    (Metric::Focused, ["facebook.com", "twitter.com", "youtube.com", "linkedin.com", "google.com"]),
    (Metric::Active, ["linkedin.com", "facebook.com", "twitter.com", "google.com", "youtube.com"]),
];

/// Per-user ratio inputs scattered around the fixture value so that the
/// cross-user median equals it.
pub fn fixture_ratio_inputs(n_users: usize) -> Vec<popularity::DomainRatioInput> {
    FIXTURE
        .iter()
        .map(|(domain, v)| {
            let visitors = (0..n_users)
                .map(|i| {
                    let spread = 1.0 + (i as f64 - (n_users / 2) as f64) * 0.1;
                    let r = |k: usize| (v[k] / 100.0 * spread).min(1.0);
                    (
                        i as UserId + 1,
                        popularity::UserRatios {
                            visit_time_ratio: r(0),
                            page_load_ratio: r(1),
                            focused_ratio: r(2),
                            active_ratio: r(3),
                        },
                    )
                })
                .collect();
            popularity::DomainRatioInput {
                domain_key: domain.to_string(),
                label: Some(domain.to_string()),
                n_users_total: n_users,
                visitors,
            }
        })
        .collect()
}

/// Integer per-user domain times whose ratios approximate the fixture,
/// plus an unranked remainder domain carrying the rest of each user's time.
pub fn fixture_domain_stats(n_users: usize) -> Vec<DomainStats> {
    let mut stats: Vec<DomainStats> = Vec::new();
    let mut rest: BTreeMap<UserId, DomainTimes> = BTreeMap::new();
    for u in 1..=n_users as UserId {
        let scale = u as i64;
        let (total_ms, total_loads) = (1_000_000 * scale, 1000 * scale);
        let mut used = DomainTimes::default();
        for (i, (domain, v)) in FIXTURE.iter().enumerate() {
            let loaded = (total_ms as f64 * v[0] / 100.0).round() as i64;
            let focused = (loaded as f64 * v[2] / 100.0).round() as i64;
            let t = DomainTimes {
                loaded_ms: loaded,
                focused_ms: focused,
                active_focused_ms: (focused as f64 * v[3] / 100.0).round() as i64,
                page_loads: (total_loads as f64 * v[1] / 100.0).round() as u64,
            };
            used.loaded_ms += t.loaded_ms;
            used.page_loads += t.page_loads;
            if stats.len() <= i {
                stats.push(DomainStats {
                    domain_key: domain.to_string(),
                    label: Some(domain.to_string()),
                    totals: DomainTimes::default(),
                    per_user: BTreeMap::new(),
                });
            }
            stats[i].per_user.insert(u, t);
        }
        rest.insert(
            u,
            DomainTimes {
                loaded_ms: total_ms - used.loaded_ms,
                focused_ms: 0,
                active_focused_ms: 0,
                page_loads: total_loads as u64 - used.page_loads,
            },
        );
    }
    stats.push(DomainStats {
        domain_key: "zz-other".into(),
        label: None,
        totals: DomainTimes::default(),
        per_user: rest,
    });
    stats
}

fn check_orders(rows: &[RankingRow], tol: f64, what: &str) -> Result<(), String> {
    for (m, want) in EXPECTED_ORDER {
        let ranked = popularity::rank(rows, m.as_str()).map_err(|e| e.to_string())?;
        let got: Vec<&str> = ranked.iter().map(|r| r.display_name()).filter(|n| *n != "zz-other").collect();
        ensure_eq!(got, want.to_vec(), "{what}: order by {}", m.as_str());
        let idx = Metric::ALL.iter().position(|x| *x == m).unwrap();
        for r in ranked.iter().filter(|r| r.display_name() != "zz-other") {
            let expected = FIXTURE.iter().find(|(d, _)| *d == r.display_name()).unwrap().1[idx] / 100.0;
            ensure!(
                (r.get(m) - expected).abs() <= tol,
                "{what}: {} {} = {} expected {}",
                r.display_name(),
                m.as_str(),
                r.get(m),
                expected
            );
        }
    }
    Ok(())
}

pub fn popularity_fixture() -> Check {
    for n in [1, 3, 5] {
        let rows = popularity::combine_user_ratios(&fixture_ratio_inputs(n));
        check_orders(&rows, 1e-12, &format!("injected ratios, {n} users"))?;
    }
    let stats = fixture_domain_stats(3);
    let totals = popularity::user_totals(&stats);
    let rows = popularity::popularity_ratios(&stats, &totals);
    check_orders(&rows, 1e-4, "injected domain times")?;
    Ok("visit time, page load, focused and active orders reproduced".into())
}

/// Per-millisecond indicator of a set over `[lo, lo + len)`.
fn mask(set: &IntervalSet, lo: i64, len: usize) -> Vec<bool> {
    let mut m = vec![false; len];
    for iv in set.iter() {
        let a = (iv.start - lo).clamp(0, len as i64) as usize;
        let b = (iv.end - lo).clamp(0, len as i64) as usize;
        m[a..b].iter_mut().for_each(|x| *x = true);
    }
    m
}

fn count(m: &[bool]) -> i64 {
    m.iter().filter(|&&b| b).count() as i64
}

fn rng_sets(seed: u64, horizon: i64) -> Vec<IntervalSet> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..rng.random_range(1..8))
        .map(|_| {
            (0..rng.random_range(0..12))
                .map(|_| {
                    let a = rng.random_range(0..horizon);
                    Interval::new(a, rng.random_range(a..=horizon.min(a + horizon / 4 + 1)))
                })
                .collect()
        })
        .collect()
}

/// Sweep-line and interval algebra against per-millisecond counting.
pub fn brute_force_trace(seed: u64) -> Result<i64, String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let horizon = rng.random_range(1_000..=1_000_000);
    let len = horizon as usize;

    // raw interval algebra
    let sets = rng_sets(seed, horizon);
    let masks: Vec<Vec<bool>> = sets.iter().map(|s| mask(s, 0, len)).collect();
    for (i, a) in sets.iter().enumerate() {
        ensure_eq!(a.measure(), count(&masks[i]), "seed {seed}: measure");
        for (j, b) in sets.iter().enumerate() {
            let and: Vec<bool> = masks[i].iter().zip(&masks[j]).map(|(x, y)| *x && *y).collect();
            let or: Vec<bool> = masks[i].iter().zip(&masks[j]).map(|(x, y)| *x || *y).collect();
            let diff: Vec<bool> = masks[i].iter().zip(&masks[j]).map(|(x, y)| *x && !*y).collect();
            ensure!(mask(&a.intersection(b), 0, len) == and, "seed {seed}: intersection {i} {j}");
            ensure!(mask(&a.union(b), 0, len) == or, "seed {seed}: union {i} {j}");
            ensure!(mask(&a.difference(b), 0, len) == diff, "seed {seed}: difference {i} {j}");
        }
    }
    let raw: Vec<Interval> = sets.iter().flat_map(|s| s.iter().copied()).collect();
    let mut levels = vec![0u32; len];
    for iv in &raw {
        for l in &mut levels[iv.start as usize..iv.end as usize] {
            *l += 1;
        }
    }
    let mut want: BTreeMap<u32, i64> = BTreeMap::new();
    for &l in levels.iter().filter(|&&l| l > 0) {
        *want.entry(l).or_default() += 1;
    }
    ensure_eq!(simultaneity(raw.iter().copied()).time_at, want, "seed {seed}: sweep line on raw intervals");

    // session-derived sets
    let steps = horizon.max(2);
    let params = RandomParams {
        users: 1,
        max_sessions: 1,
        grid_ms: 1,
        min_session_steps: steps / 2,
        max_session_steps: steps,
        ..RandomParams::default()
    };
    let t = trace(synth::random_schedule(seed, &params), seed);
    for s in sessions(&t) {
        let lo = s.lifespan.start;
        let n = s.length() as usize;
        ensure!(n as i64 <= 1_000_000, "horizon {n} too long");
        let mut wl = vec![0u32; n];
        let mut tl = vec![0u32; n];
        for w in &s.windows {
            for (k, b) in mask(&IntervalSet::from_interval(w.lifespan), lo, n).into_iter().enumerate() {
                wl[k] += u32::from(b);
            }
            for tab in &w.tabs {
                for (k, b) in mask(&IntervalSet::from_interval(tab.lifespan), lo, n).into_iter().enumerate() {
                    tl[k] += u32::from(b);
                }
            }
        }
        for (levels, got, what) in [
            (&wl, simultaneity(s.windows.iter().map(|w| w.lifespan)), "windows"),
            (&tl, simultaneity(s.tabs().map(|x| x.lifespan)), "tabs"),
        ] {
            let mut want: BTreeMap<u32, i64> = BTreeMap::new();
            for &l in levels.iter().filter(|&&l| l > 0) {
                *want.entry(l).or_default() += 1;
            }
            ensure_eq!(got.time_at, want, "seed {seed}: {what} sweep line");
        }

        let active = mask(&s.active_time, lo, n);
        for p in s.page_views() {
            let vis = mask(&p.visible_time, lo, n);
            let w = s.window(p.window_id).unwrap();
            let focus = mask(&w.focus_time, lo, n);
            let mini = mask(&w.minimized_time, lo, n);
            let mut av = 0;
            let mut strict = 0;
            for k in 0..n {
                av += i64::from(vis[k] && active[k]);
                strict += i64::from(vis[k] && focus[k] && !mini[k]);
            }
            ensure_eq!(p.visible_time.intersection(&s.active_time).measure(), av, "seed {seed}: active visible");
            ensure_eq!(
                p.visible_time.intersection(&attention(s, p.window_id)).measure(),
                strict,
                "seed {seed}: strict"
            );
        }

        for th in THRESHOLDS {
            let open: Vec<Vec<bool>> =
                s.windows.iter().map(|w| mask(&IntervalSet::from_interval(w.lifespan), lo, n)).collect();
            let idle: Vec<Vec<bool>> = s.windows.iter().map(|w| mask(&idle::window_idle_spans(w, th), lo, n)).collect();
            let mut want = 0;
            for k in 0..n {
                let any_open = open.iter().any(|o| o[k]);
                let all_idle = open.iter().zip(&idle).all(|(o, i)| !o[k] || i[k]);
                want += i64::from(any_open && all_idle);
            }
            ensure_eq!(idle::implicit_idle(s, th), want, "seed {seed}: implicit idle at {th}");
        }
    }
    Ok(horizon)
}

pub fn brute_force(n: u64) -> Check {
    let mut max = 0;
    for seed in 0..n {
        max = max.max(brute_force_trace(seed)?);
    }
    Ok(format!("{n} traces exact, largest horizon {max} ms"))
}

/// Random sessions, at least `n` of them.
pub fn session_pool(n: usize, params: &RandomParams) -> Vec<SessionModel> {
    let mut out = Vec::new();
    let mut seed = 10_000;
    while out.len() < n {
        out.extend(sessions(&trace(synth::random_schedule(seed, params), seed)).cloned());
        seed += 1;
    }
    out
}

pub fn conservation() -> Check {
    let pool = session_pool(1000, &RandomParams::default());
    for s in &pool {
        let inactive = IntervalSet::from_interval(s.lifespan).difference(&s.active_time);
        ensure!(s.active_time.within(s.lifespan), "session {}: active time outside lifespan", s.session_id);
        ensure_eq!(inactive.measure(), idle::explicit_idle(s), "session {}: explicit idle", s.session_id);
        ensure_eq!(idle::explicit_idle(s) + s.active_time.measure(), s.length(), "session {}", s.session_id);
    }
    Ok(format!("{} sessions", pool.len()))
}

pub fn monotonicity() -> Check {
    let pool = session_pool(1000, &RandomParams::default());
    let mut strict = 0;
    for s in &pool {
        let v: Vec<i64> = THRESHOLDS.iter().map(|&t| idle::implicit_idle(s, t)).collect();
        ensure!(v[0] >= v[1] && v[1] >= v[2], "session {}/{}: {v:?}", s.user_id, s.session_id);
        strict += usize::from(v[0] > v[2]);
    }
    ensure!(strict > 0, "no session separates the thresholds");
    Ok(format!("{} sessions, {strict} strictly decreasing", pool.len()))
}

pub fn shark_fin() -> Check {
    let params = RandomParams { min_session_steps: 5, max_session_steps: 1_200, ..RandomParams::default() };
    let pool = session_pool(1000, &params);
    let mut checked = 0;
    for s in &pool {
        let profile = idle::idle_profile(s, &THRESHOLDS);
        for t in THRESHOLDS.into_iter().filter(|&t| s.length() < t) {
            ensure_eq!(profile.activity_ratio(IdleMeasure::Implicit(t)), Some(1.0), "session {} at {t}", s.session_id);
            checked += 1;
        }
    }
    ensure!(checked > 0, "no short sessions generated");
    Ok(format!("{checked} session/threshold pairs below the wall"))
}

/// Expected lifespan ends after dropped closes are estimated: the time of
/// the last surviving event carrying the session (or window) id.
type SessionEnds = BTreeMap<(UserId, u64), i64>;
type WindowEnds = BTreeMap<(UserId, u64, u64), i64>;

fn predicted_ends(stream: &[EventRecord]) -> (SessionEnds, WindowEnds) {
    let mut sessions = BTreeMap::new();
    let mut windows = BTreeMap::new();
    for e in stream {
        let s = sessions.entry((e.user_id, e.session_id)).or_insert(e.time);
        *s = (*s).max(e.time);
        if let Some(w) = e.window_id {
            let x = windows.entry((e.user_id, e.session_id, w)).or_insert(e.time);
            *x = (*x).max(e.time);
        }
    }
    (sessions, windows)
}

pub fn cleaning_recovery_trace(t: &Trace) -> Result<(usize, usize), String> {
    let (corrupted, manifest) = synth::corrupt(&t.events, 0.01, 0.10, t.seed);
    let dropped: Vec<&EventRecord> = manifest.dropped().collect();
    let mut survivors: Vec<EventRecord> = Vec::new();
    let mut dropped_iter = dropped.iter().peekable();
    for e in &t.events {
        if dropped_iter.peek().is_some_and(|d| **d == e) {
            dropped_iter.next();
        } else {
            survivors.push(e.clone());
        }
    }
    ensure_eq!(survivors.len() + dropped.len(), t.events.len(), "seed {}: manifest drops", t.seed);

    let mut sorted = corrupted.clone();
    sort_by_time(&mut sorted);
    let (deduped, report) = cleaning::dedupe(sorted).map_err(|e| e.to_string())?;
    ensure_eq!(report.duplicates_removed, manifest.duplicates(), "seed {}: duplicates removed", t.seed);
    let mut expect = survivors.clone();
    sort_by_time(&mut expect);
    ensure!(deduped == expect, "seed {}: dedupe output differs from the uncorrupted stream", t.seed);

    let out = clean(corrupted, usize::MAX).map_err(|e| e.to_string())?;
    ensure_eq!(out.report.duplicates_removed, manifest.duplicates(), "seed {}: pipeline duplicates", t.seed);
    let dropped_sessions = dropped.iter().filter(|e| matches!(e.kind, EventKind::SessionClose { .. })).count();
    let dropped_windows = dropped.iter().filter(|e| matches!(e.kind, EventKind::WindowClose { .. })).count();
    ensure_eq!(out.report.sessions_closed_by_estimate, dropped_sessions, "seed {}: session estimates", t.seed);
    ensure_eq!(out.report.windows_closed_by_estimate, dropped_windows, "seed {}: window estimates", t.seed);
    ensure!(out.quarantine.is_empty(), "seed {}: unexpected quarantine", t.seed);

    let (session_end, window_end) = predicted_ends(&survivors);
    let (users, _) = pipeline::sessionize(&out.events);
    for s in users.values().flatten() {
        let end = session_end[&(s.user_id, s.session_id)];
        ensure_eq!(s.lifespan.end, end, "seed {}: session {}/{} end", t.seed, s.user_id, s.session_id);
        for w in &s.windows {
            let dropped_close = dropped.iter().any(|d| {
                matches!(d.kind, EventKind::WindowClose { .. })
                    && (d.user_id, d.session_id, d.window_id) == (s.user_id, s.session_id, Some(w.window_id))
            });
            if dropped_close {
                let end = window_end[&(s.user_id, s.session_id, w.window_id)];
                ensure_eq!(w.lifespan.end, end, "seed {}: window {} end", t.seed, w.window_id);
            }
        }
    }
    let original: BTreeMap<(UserId, u64), i64> = sessions(t).map(|s| ((s.user_id, s.session_id), s.length())).collect();
    for s in users.values().flatten() {
        ensure!(s.length() <= original[&(s.user_id, s.session_id)], "seed {}: session grew", t.seed);
    }
    Ok((manifest.duplicates(), dropped.len()))
}

pub fn cleaning_recovery(n: u64) -> Check {
    let (mut dups, mut drops) = (0, 0);
    for seed in 0..n {
        let (d, x) = cleaning_recovery_trace(&random_trace(seed))?;
        dups += d;
        drops += x;
    }
    ensure!(dups > 0 && drops > 0, "corruption never triggered ({dups} duplicates, {drops} drops)");
    Ok(format!("{n} traces, {dups} duplicates and {drops} dropped closes recovered"))
}

pub fn nesting_trace(t: &Trace) -> Result<usize, String> {
    let all: Vec<SessionModel> = sessions(t).cloned().collect();
    let mut n = 0;
    for mode in [FocusMode::Visible, FocusMode::Strict] {
        for d in popularity::aggregate_domains(&all, mode) {
            for (u, x) in d.per_user.iter().map(|(u, x)| (Some(*u), x)).chain([(None, &d.totals)]) {
                ensure!(
                    0 <= x.active_focused_ms && x.active_focused_ms <= x.focused_ms && x.focused_ms <= x.loaded_ms,
                    "seed {}: domain {} user {u:?} ({mode:?}): {x:?}",
                    t.seed,
                    d.display_name()
                );
                n += 1;
            }
        }
    }
    Ok(n)
}

pub fn searcher_never_visible() -> Result<f64, String> {
    let t = trace(synth::preset("searcher").unwrap(), 0);
    let truths = synth::ground_truth(&t.schedule, 0, &THRESHOLDS);
    let pages: usize = truths.iter().map(|s| s.pages.len()).sum();
    let never: usize = truths.iter().map(SessionTruth::never_visible).sum();
    let all: Vec<SessionModel> = sessions(&t).cloned().collect();
    let got = parallel::tab_selection_distribution(&all).never_visible_fraction();
    let want = never as f64 / pages as f64;
    ensure!(never > 0, "preset has no unseen pages");
    ensure_eq!(got, want, "never-visible fraction");
    for (u, ss) in &t.users {
        let per_user = parallel::summarize(ss).never_visible_fraction;
        let user_truth: Vec<&SessionTruth> = truths.iter().filter(|s| s.user_id == *u).collect();
        let p: usize = user_truth.iter().map(|s| s.pages.len()).sum();
        let nv: usize = user_truth.iter().map(|s| s.never_visible()).sum();
        ensure_eq!(per_user, nv as f64 / p as f64, "user {u} never-visible fraction");
    }
    Ok(got)
}

pub fn nesting(n: u64) -> Check {
    let mut checked = 0;
    for seed in 0..n {
        checked += nesting_trace(&random_trace(seed))?;
    }
    for (name, _) in synth::PRESETS {
        checked += nesting_trace(&trace(synth::preset(name).unwrap(), 0))?;
    }
    let f = searcher_never_visible()?;
    Ok(format!("{checked} domain aggregates nested; searcher never-visible {f:.6} matches schedule"))
}

/// Records for one ingestion client, deliberately out of time order.
pub fn client_records(client: u64, n: usize) -> Vec<EventRecord> {
    let url = browsetrace::event::hash_url("http://client.example.org/page", b"ingest").unwrap();
    (0..n)
        .map(|i| {
            let time = 1_600_000_000_000 + ((i * 7919 + client as usize * 104_729) % 1_000_000) as i64;
            let kind = match i % 3 {
                0 => EventKind::Activity { active: i % 2 == 0 },
                1 => EventKind::PageLoad {
                    url: url.clone(),
                    cause: browsetrace::event::LoadCause::Link,
                    background: false,
                },
                _ => EventKind::TabSelect,
            };
            let (window_id, tab_id) = match kind {
                EventKind::Activity { .. } => (None, None),
                _ => (Some(client), Some(i as u64 % 5 + 1)),
            };
            EventRecord { time, tz_offset: 60, user_id: client % 3 + 1, window_id, session_id: client, tab_id, kind }
        })
        .collect()
}

pub async fn ingestion_async(clients: u64, per_client: usize) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Arc::new(EventStore::open(dir.path()).map_err(|e| e.to_string())?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let srv = tokio::spawn(axum::serve(listener, server::router(store.clone())).into_future());

    let http = reqwest::Client::new();
    let mut tasks = Vec::new();
    for c in 0..clients {
        let http = http.clone();
        let url = format!("http://{addr}/v1/events");
        tasks.push(tokio::spawn(async move {
            let records = client_records(c, per_client);
            let mut accepted = 0usize;
            for chunk in records.chunks(50) {
                let body: String = chunk.iter().map(|r| serialize_event(r) + "\n").collect();
                let resp = http.post(&url).body(body).send().await.map_err(|e| e.to_string())?;
                if !resp.status().is_success() {
                    return Err(format!("client {c}: status {}", resp.status()));
                }
                accepted +=
                    resp.text().await.map_err(|e| e.to_string())?.trim().parse::<usize>().map_err(|e| e.to_string())?;
            }
            Ok::<usize, String>(accepted)
        }));
    }
    let mut accepted = 0;
    for t in tasks {
        accepted += t.await.map_err(|e| e.to_string())??;
    }
    let expected = clients as usize * per_client;
    ensure_eq!(accepted, expected, "accepted");

    let mut lines = 0;
    let mut stored: Vec<EventRecord> = Vec::new();
    for u in store.users().map_err(|e| e.to_string())? {
        let bytes = std::fs::read(store.user_path(u)).map_err(|e| e.to_string())?;
        ensure!(bytes.ends_with(b"\n"), "user {u}: file does not end with a newline");
        for (i, line) in bytes.split(|&b| b == b'\n').enumerate().filter(|(_, l)| !l.is_empty()) {
            if browsetrace::event::wire::is_header(line) {
                continue;
            }
            let e = parse_event(line).map_err(|e| format!("user {u} line {}: torn or invalid record: {e}", i + 1))?;
            stored.push(e);
            lines += 1;
        }

        let body = http
            .get(format!("http://{addr}/v1/users/{u}/events"))
            .send()
            .await
            .map_err(|e| e.to_string())?
            .bytes()
            .await
            .map_err(|e| e.to_string())?;
        let exported = io::parse_lines(&body).map_err(|(l, e)| format!("export line {l}: {e}"))?;
        ensure!(exported.windows(2).all(|p| p[0].time <= p[1].time), "user {u}: export not sorted by time");
        let mut a = exported.clone();
        let mut b: Vec<EventRecord> = stored.iter().filter(|e| e.user_id == u).cloned().collect();
        a.sort_by_cached_key(serialize_event);
        b.sort_by_cached_key(serialize_event);
        ensure!(a == b, "user {u}: export is not a permutation of the stored log");
    }
    ensure_eq!(lines, expected, "stored lines");
    let mut sent: Vec<String> =
        (0..clients).flat_map(|c| client_records(c, per_client)).map(|r| serialize_event(&r)).collect();
    let mut got: Vec<String> = stored.iter().map(serialize_event).collect();
    sent.sort();
    got.sort();
    ensure!(sent == got, "stored records differ from the submitted ones");
    srv.abort();
    Ok(format!("{clients} clients x {per_client} records: {lines} intact lines, exports sorted"))
}

pub fn ingestion(clients: u64, per_client: usize) -> Check {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(ingestion_async(clients, per_client))
}

/// Several users' random traces merged and lightly corrupted.
pub fn report_input(dir: &Path) -> std::path::PathBuf {
    let mut events = Vec::new();
    for seed in 0..6 {
        let mut s = synth::random_schedule(seed, &RandomParams::default());
        for (i, u) in s.users.iter_mut().enumerate() {
            u.user_id = 100 + seed * 10 + i as u64;
        }
        events.extend(synth::generate(&s, seed).unwrap());
    }
    events.extend(synth::generate(&synth::preset("searcher").unwrap(), 0).unwrap());
    let (events, _) = synth::corrupt(&events, 0.01, 0.1, 3);
    let path = dir.join("input.ndjsonl");
    std::fs::write(&path, io::encode_events(&events)).unwrap();
    path
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

pub fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = report_input(dir.path());
    let mut runs = Vec::new();
    for (i, jobs) in [1, 4].into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let cfg = PipelineConfig { input: input.clone(), output: out.clone(), jobs, ..Default::default() };
        pipeline::run_report(&cfg).map_err(|e| e.to_string())?;
        runs.push(read_dir_bytes(&out));
    }
    let bin = dir.path().join("cli");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_browsetrace"))
        .args(["report", "--jobs", "3", "--in"])
        .arg(&input)
        .arg("--out")
        .arg(&bin)
        .status()
        .map_err(|e| e.to_string())?;
    ensure!(status.success(), "cli report exited with {status}");
    runs.push(read_dir_bytes(&bin));

    ensure!(runs[0].len() >= 9, "only {} artifacts", runs[0].len());
    for (i, r) in runs.iter().enumerate().skip(1) {
        ensure_eq!(r.keys().collect::<Vec<_>>(), runs[0].keys().collect::<Vec<_>>(), "run {i}: file set");
        for (name, bytes) in r {
            ensure!(*bytes == runs[0][name], "run {i}: {name} differs");
        }
    }
    Ok(format!("{} artifacts byte-identical across 3 runs", runs[0].len()))
}
