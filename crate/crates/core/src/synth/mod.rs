//! Synthetic traces with known ground truth.
//!
//! A [`TraceSchedule`] scripts users, sessions, windows, tabs, page loads,
//! selections and idle spans. [`generate`] turns it into an event stream,
//! [`corrupt`] injects duplicates and dropped closes, and [`ground_truth`]
//! evaluates the schedule directly to give the expected value of every
//! metric.

mod generate;
mod oracle;
mod presets;
mod random;
mod schedule;

use thiserror::Error;

pub use generate::{corrupt, generate, generate_bytes, Corruption, CorruptionManifest};
pub use oracle::{ground_truth, level_mean, oracle_median, PageTruth, SessionTruth, WindowSpans};
pub use presets::{preset, preset_text, PRESETS};
pub use random::{random_schedule, RandomParams};
pub use schedule::{
    format_duration, parse_duration, LoadScript, SessionScript, TabScript, TraceSchedule, UserScript, WindowScript,
    DEFAULT_EPOCH_MS,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("inconsistent schedule: {0}")]
    InconsistentSchedule(String),
    #[error("schedule line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
