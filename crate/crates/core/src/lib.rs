//! Browsing-telemetry pipeline.
//!
//! Browser event streams are ingested into per-user logs ([`store`],
//! [`server`]), cleaned ([`cleaning`]), reconstructed into session models
//! ([`session`]) and analyzed for parallel browsing, idle time, website
//! popularity and navigation trees ([`metrics`], [`navgraph`]). The
//! [`synth`] module generates traces with known ground truth for testing the
//! whole chain.

pub mod cleaning;
pub mod event;
pub mod interval;
pub mod io;
pub mod metrics;
pub mod navgraph;
pub mod pipeline;
pub mod server;
pub mod session;
pub mod stats;
pub mod store;
pub mod synth;

pub use event::{EventKind, EventRecord, UrlRef};
pub use interval::{Interval, IntervalSet};
pub use session::SessionModel;
