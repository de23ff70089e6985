//! Seeded random schedules that always validate.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event::{LoadCause, TabId, WindowState};

use super::schedule::{
    LoadScript, SessionScript, TabScript, TraceSchedule, UserScript, WindowScript, DEFAULT_EPOCH_MS,
};

#[derive(Debug, Clone)]
pub struct RandomParams {
    pub users: usize,
    pub max_sessions: usize,
    pub max_windows: usize,
    pub max_tabs: usize,
    pub max_loads: usize,
    /// Session length bounds in grid steps.
    pub min_session_steps: i64,
    pub max_session_steps: i64,
    /// Every scripted time is a multiple of this.
    pub grid_ms: i64,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams {
            users: 3,
            max_sessions: 3,
            max_windows: 3,
            max_tabs: 5,
            max_loads: 4,
            min_session_steps: 60,
            max_session_steps: 3_600,
            grid_ms: 1_000,
        }
    }
}

const HOSTS: [&str; 12] = [
    "www.search.example.com",
    "news.example.com",
    "mail.provider.net",
    "www.provider.net",
    "video.stream.org",
    "www.bbc.co.uk",
    "shop.retail.de",
    "wiki.encyclo.org",
    "maps.search.example.com",
    "social.network.io",
    "docs.office.example.com",
    "blog.personal.fr",
];

fn url(rng: &mut ChaCha8Rng) -> String {
    let host = HOSTS.choose(rng).expect("non-empty");
    format!("http://{host}/p{}", rng.random_range(0..20))
}

fn cause(rng: &mut ChaCha8Rng) -> LoadCause {
    match rng.random_range(0..10) {
        0..=4 => LoadCause::Link,
        5 | 6 => LoadCause::Typed,
        7 => LoadCause::Bookmark,
        8 => LoadCause::Reload,
        _ => LoadCause::Other,
    }
}

/// Distinct sorted grid points in `[lo, hi)`, at most `max`.
fn points(rng: &mut ChaCha8Rng, lo: i64, hi: i64, max: usize) -> Vec<i64> {
    let n = rng.random_range(0..=max);
    let mut v: Vec<i64> = (0..n).filter(|_| hi > lo).map(|_| rng.random_range(lo..hi)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn random_schedule(seed: u64, p: &RandomParams) -> TraceSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = p.grid_ms.max(1);
    let mut users = Vec::with_capacity(p.users);
    for u in 0..p.users {
        let mut cursor = rng.random_range(0..86_400_000 / g);
        let mut sessions = Vec::new();
        for sid in 0..rng.random_range(1..=p.max_sessions.max(1)) {
            let len =
                rng.random_range(p.min_session_steps.max(1)..=p.max_session_steps.max(p.min_session_steps.max(1)));
            let start = cursor + 1;
            let end = start + len;
            cursor = end + rng.random_range(0..600);
            sessions.push(random_session(&mut rng, sid as u64 + 1, start, end, p));
        }
        // grid steps to epoch milliseconds
        for s in &mut sessions {
            scale(s, g);
        }
        users.push(UserScript { user_id: 1000 + u as u64, tz_offset: rng.random_range(-8..=9) * 60, sessions });
    }
    TraceSchedule { epoch: DEFAULT_EPOCH_MS, key: Some(format!("random-{seed}")), users }
}

fn scale(s: &mut SessionScript, g: i64) {
    let f = |t: &mut i64| *t = DEFAULT_EPOCH_MS + *t * g;
    f(&mut s.start);
    f(&mut s.end);
    for (a, b) in &mut s.idle {
        f(a);
        f(b);
    }
    for w in &mut s.windows {
        f(&mut w.open);
        f(&mut w.close);
        for t in &mut w.tabs {
            f(&mut t.open);
            f(&mut t.close);
            for l in &mut t.loads {
                f(&mut l.time);
            }
        }
        for x in &mut w.selects {
            f(&mut x.0);
        }
        for x in &mut w.focus {
            f(&mut x.0);
        }
        for x in &mut w.states {
            f(&mut x.0);
        }
    }
}

fn random_session(rng: &mut ChaCha8Rng, sid: u64, start: i64, end: i64, p: &RandomParams) -> SessionScript {
    let n_windows = rng.random_range(0..=p.max_windows);
    let mut windows = Vec::new();
    for wid in 1..=n_windows as u64 {
        let open = rng.random_range(start..start + (end - start) / 2 + 1);
        let close = if rng.random_bool(0.5) { end } else { rng.random_range(open + 1..=end) };
        windows.push(random_window(rng, wid, open, close, p));
    }
    let mut idle = Vec::new();
    let mut at = start;
    for _ in 0..rng.random_range(0..=2) {
        if at + 2 > end {
            break;
        }
        let a = rng.random_range(at..end - 1);
        let b = if rng.random_bool(0.25) { end } else { rng.random_range(a + 1..end) };
        idle.push((a, b));
        at = b;
    }
    SessionScript { session_id: sid, start, end, windows, idle }
}

fn random_window(rng: &mut ChaCha8Rng, wid: u64, open: i64, close: i64, p: &RandomParams) -> WindowScript {
    let mut tabs: Vec<TabScript> = Vec::new();
    for tid in 1..=rng.random_range(1..=p.max_tabs.max(1)) as TabId {
        let t_open = if tid == 1 { open } else { rng.random_range(open..close) };
        let t_close = if rng.random_bool(0.4) { close } else { rng.random_range(t_open + 1..=close) };
        let candidates: Vec<TabId> =
            tabs.iter().filter(|x| x.open <= t_open && t_open < x.close).map(|x| x.tab_id).collect();
        let opener = if rng.random_bool(0.6) { candidates.choose(rng).copied() } else { None };
        tabs.push(TabScript { tab_id: tid, open: t_open, close: t_close, opener, loads: Vec::new() });
    }

    // candidate loads and selects, decided in time order against the displayed tab
    enum Cand {
        Load(usize),
        Select,
    }
    let mut cands: Vec<(i64, usize, Cand)> = Vec::new();
    for (ti, t) in tabs.iter().enumerate() {
        for time in points(rng, t.open, t.close, p.max_loads) {
            cands.push((time, ti, Cand::Load(ti)));
        }
    }
    for time in points(rng, open, close, p.max_loads * 2) {
        cands.push((time, usize::MAX, Cand::Select));
    }
    cands.sort_by_key(|c| (c.0, matches!(c.2, Cand::Load(_)), c.1));

    let mut selects = Vec::new();
    let mut display_times: Vec<i64> = Vec::new();
    let mut displayed: Option<usize> = None;
    for (time, _, cand) in cands {
        if displayed.is_some_and(|d| tabs[d].close <= time) {
            displayed = None;
        }
        let free = display_times.last() != Some(&time);
        match cand {
            Cand::Select => {
                let open_tabs: Vec<usize> = (0..tabs.len())
                    .filter(|&i| tabs[i].open <= time && time < tabs[i].close && Some(i) != displayed)
                    .collect();
                if let (true, Some(&i)) = (free, open_tabs.choose(rng)) {
                    selects.push((time, tabs[i].tab_id));
                    display_times.push(time);
                    displayed = Some(i);
                }
            }
            Cand::Load(ti) => {
                let want_fg = rng.random_bool(0.6);
                let background = match (want_fg && free, displayed == Some(ti)) {
                    (true, _) => false,
                    (false, false) => true,
                    (false, true) if free => false,
                    (false, true) => continue,
                };
                if !background {
                    display_times.push(time);
                    displayed = Some(ti);
                }
                let (u, c) = (url(rng), cause(rng));
                tabs[ti].loads.push(LoadScript { time, url: u, cause: c, background });
            }
        }
    }

    let focus: Vec<(i64, bool)> =
        points(rng, open, close, 4).into_iter().enumerate().map(|(i, t)| (t, i % 2 == 1)).collect();
    let states: Vec<(i64, WindowState)> = points(rng, open, close, 3)
        .into_iter()
        .map(|t| (t, *WindowState::ALL.choose(rng).expect("non-empty")))
        .collect();
    WindowScript { window_id: wid, open, close, tabs, selects, focus, states }
}
