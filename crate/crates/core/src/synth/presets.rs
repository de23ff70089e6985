//! Behavioral presets shipped with the crate.

use super::schedule::TraceSchedule;

pub const PRESETS: [(&str, &str); 3] = [
    ("searcher", include_str!("../../presets/searcher.sched")),
    ("radio-listener", include_str!("../../presets/radio-listener.sched")),
    ("power-user", include_str!("../../presets/power-user.sched")),
];

/// Preset source text by name; `_` and `-` are interchangeable.
pub fn preset_text(name: &str) -> Option<&'static str> {
    let want = name.replace('_', "-");
    PRESETS.iter().find(|(n, _)| *n == want).map(|(_, text)| *text)
}

pub fn preset(name: &str) -> Option<TraceSchedule> {
    preset_text(name).map(|t| t.parse().expect("shipped presets parse"))
}
