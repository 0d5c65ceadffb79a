//! Deterministic virtual machine for instrumented mini-IR programs.
//!
//! One call to [`Executor::run`] interprets the program against one input
//! under a priority-weighted random scheduler. Instructions are atomic
//! scheduling units. Identical `(plan, program, input, config)` — including
//! the schedule seed — reproduce the result bit for bit: the VM holds no
//! global state and draws all randomness from the seed.
//!
//! Three feedback channels come out of a run:
//!
//! - a 64 KiB transition coverage map updated at every deputy instruction,
//!   with a per-thread previous-label register so one thread's stream never
//!   smears into another's;
//! - a thread-context signature hashing the ordered lock/unlock/join events,
//!   each tagged with the executing thread's latest deputy label and its
//!   fork-order id;
//! - crash records with full call-stack backtraces.

mod compile;
mod trace;
mod vm;

pub use trace::{render_trace, BlockedInfo, BlockedKind, LeakInfo, Trace, TraceOp, TraceStep};

use crate::analysis::InstrumentationPlan;
use crate::mtir::Program;
use crate::rng::{Fnv1a, FNV_OFFSET_BASIS};
use serde::{Deserialize, Serialize};

pub const COVERAGE_MAP_SIZE: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub schedule_rng_seed: u64,
    /// Instruction budget; exhaustion is reported as a hang, not a crash.
    pub max_steps: u64,
    /// Informational thread cap; the VM does not enforce it.
    pub num_thread_slots: usize,
    /// When set, forked threads get a priority drawn uniformly from 1..=32;
    /// otherwise every thread runs at priority 1.
    pub intervention_enabled: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            schedule_rng_seed: 0,
            max_steps: 1_000_000,
            num_thread_slots: 16,
            intervention_enabled: true,
        }
    }
}

impl SchedulerConfig {
    pub fn with_seed(&self, schedule_rng_seed: u64) -> SchedulerConfig {
        SchedulerConfig { schedule_rng_seed, ..self.clone() }
    }
}

/// One call-stack entry, outermost first in a backtrace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub function: String,
    pub block: String,
    pub instr: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitStatus {
    Exit(i64),
    Crash { tag: String, backtrace: Vec<Frame> },
    Deadlock,
    StepBudgetExhausted,
}

impl ExitStatus {
    pub fn is_crash(&self) -> bool {
        matches!(self, ExitStatus::Crash { .. })
    }
}

/// Transition hit counts, saturating at 255. Slot index is
/// `(prev_label >> 1) ^ cur_label` with a per-thread `prev_label`.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    map: Box<[u8; COVERAGE_MAP_SIZE]>,
}

impl CoverageMap {
    pub fn new() -> Self {
        let boxed: Box<[u8; COVERAGE_MAP_SIZE]> =
            vec![0u8; COVERAGE_MAP_SIZE].into_boxed_slice().try_into().unwrap();
        CoverageMap { map: boxed }
    }

    #[inline]
    pub fn hit(&mut self, prev_label: u16, label: u16) {
        let idx = ((prev_label >> 1) ^ label) as usize;
        self.map[idx] = self.map[idx].saturating_add(1);
    }

    pub fn as_slice(&self) -> &[u8; COVERAGE_MAP_SIZE] {
        &self.map
    }

    pub fn count_nonzero(&self) -> usize {
        self.map.iter().filter(|&&c| c != 0).count()
    }
}

impl Default for CoverageMap {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CoverageMap({} slots hit)", self.count_nonzero())
    }
}

/// Context signature: FNV-1a over the ordered `(Loc, N_ctx)` event sequences
/// of the three thread-API categories. An empty sequence hashes to the FNV
/// offset basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextSignature {
    pub lock: u64,
    pub unlock: u64,
    pub join: u64,
}

impl ContextSignature {
    pub const EMPTY: ContextSignature = ContextSignature {
        lock: FNV_OFFSET_BASIS,
        unlock: FNV_OFFSET_BASIS,
        join: FNV_OFFSET_BASIS,
    };

    pub fn is_empty(&self) -> bool {
        *self == Self::EMPTY
    }
}

/// Accumulates the per-category event hashes during a run. Each event feeds
/// the label of the deputy most recently executed by the calling thread
/// (0 when it has executed none) and the thread's fork-order id.
#[derive(Debug, Clone)]
pub(crate) struct ContextAccumulator {
    lock: Fnv1a,
    unlock: Fnv1a,
    join: Fnv1a,
}

impl ContextAccumulator {
    pub fn new() -> Self {
        ContextAccumulator { lock: Fnv1a::new(), unlock: Fnv1a::new(), join: Fnv1a::new() }
    }

    #[inline]
    fn push(h: &mut Fnv1a, loc: u16, n_ctx: u32) {
        h.write_u16(loc);
        h.write_u32(n_ctx);
    }

    pub fn lock_event(&mut self, loc: u16, n_ctx: u32) {
        Self::push(&mut self.lock, loc, n_ctx);
    }

    pub fn unlock_event(&mut self, loc: u16, n_ctx: u32) {
        Self::push(&mut self.unlock, loc, n_ctx);
    }

    pub fn join_event(&mut self, loc: u16, n_ctx: u32) {
        Self::push(&mut self.join, loc, n_ctx);
    }

    pub fn signature(&self) -> ContextSignature {
        ContextSignature {
            lock: self.lock.finish(),
            unlock: self.unlock.finish(),
            join: self.join.finish(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub exit: ExitStatus,
    pub coverage: CoverageMap,
    /// All-empty whenever the run never forked.
    pub s_ctx: ContextSignature,
    pub is_mt: bool,
    pub steps: u64,
    pub threads_forked: u32,
}

/// Reusable compiled form of one `(program, plan)` pair. Building it once
/// and calling [`Executor::run`] per input is the fast path for campaigns.
pub struct Executor {
    pub(crate) prog: compile::CompiledProgram,
}

impl Executor {
    pub fn new(program: &Program, plan: &InstrumentationPlan) -> Executor {
        Executor { prog: compile::compile(program, plan) }
    }

    pub fn run(&self, input: &[u8], cfg: &SchedulerConfig) -> ExecutionResult {
        vm::run(&self.prog, input, cfg, None)
    }

    pub fn run_traced(&self, input: &[u8], cfg: &SchedulerConfig) -> (ExecutionResult, Trace) {
        let mut trace = Trace::new(cfg.schedule_rng_seed, self.prog.shared_names.clone());
        let result = vm::run(&self.prog, input, cfg, Some(&mut trace));
        trace.exit = result.exit.clone();
        (result, trace)
    }
}

/// Convenience wrapper for one-off runs.
pub fn execute(
    plan: &InstrumentationPlan,
    program: &Program,
    input: &[u8],
    cfg: &SchedulerConfig,
) -> ExecutionResult {
    Executor::new(program, plan).run(input, cfg)
}

/// Number of distinct context signatures among the multithreaded results;
/// single-threaded runs contribute nothing.
pub fn distinct_signatures(results: &[ExecutionResult]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for r in results {
        if r.is_mt {
            seen.insert(r.s_ctx);
        }
    }
    seen.len()
}

#[cfg(test)]
mod tests;
