//! Concurrency-bug revealing: replays corpus seeds under trace-level
//! detectors (vector-clock happens-before plus lockset races, lock-order
//! inversion, deadlock, thread-leak) and deduplicates violations into bug
//! reports with time-to-exposure accounting.

mod detect;
mod patterns;
mod vclock;

pub use detect::{detect_violations, BugKey, DetectError, Violation, ViolationKind};
pub use patterns::{replay, BugSummary, ReplayConfig, ReplayPattern, ReplayReport};
pub use vclock::VectorClock;
