//! Analytics over reconstructed sessions.

pub mod idle;
pub mod parallel;
pub mod popularity;
