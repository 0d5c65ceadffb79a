//! Thread-aware grey-box fuzzing for a concurrent mini-IR virtual machine.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`mtir`] — the mini-IR target language: parser, validator, and the
//!    instruction/function/program model. Thread APIs (fork, join, lock,
//!    unlock) and shared variables are first-class syntax.
//! 2. [`analysis`] — thread-aware static analysis: ICFG construction,
//!    thread-API site sets, suspicious-interleaving-scope extraction, and
//!    stratified coverage instrumentation planning.
//! 3. [`executor`] — a deterministic virtual machine with a seedable
//!    priority-randomizing scheduler; produces coverage maps, thread-context
//!    signatures, and crash records per run.
//! 4. [`fuzzer`] — the fuzzing loop: context-aware seed selection, repeated
//!    execution with schedule diversification, mutation, and crash triage.
//! 5. [`replay`] — concurrency-bug revealing over recorded traces:
//!    vector-clock + lockset race detection, lock-order-inversion, deadlock,
//!    and thread-leak detection under two corpus replay patterns.
//! 6. [`bench`] — the bundled benchmark programs with planted ground-truth
//!    bugs, plus campaign/replay result aggregation.

pub mod analysis;
pub mod bench;
pub mod cli;
pub mod executor;
pub mod fuzzer;
pub mod mtir;
pub mod replay;
pub mod rng;
