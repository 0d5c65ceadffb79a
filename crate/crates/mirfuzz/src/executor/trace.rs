//! Execution traces: one record per retired instruction, plus the end-state
//! facts the concurrency detectors need (blocked threads, never-joined
//! threads). Traces are self-contained — they carry the shared-variable name
//! table — so detectors do not need the program.

use super::ExitStatus;
use crate::mtir::{InstrId, InstrTable, Program};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceOp {
    /// Shared-variable access; slots index the trace's `shared_names`.
    Access { reads: Vec<u16>, writes: Vec<u16> },
    Lock(u32),
    Unlock(u32),
    Fork { child: u32 },
    /// Join completion; children are the joined threads' ids.
    Join { children: Vec<u32> },
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Fork-order thread id; main is 0.
    pub thread: u32,
    pub site: InstrId,
    pub op: TraceOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockedKind {
    Lock(u32),
    Join,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedInfo {
    pub thread: u32,
    pub site: InstrId,
    pub kind: BlockedKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakInfo {
    pub thread: u32,
    pub fork_site: InstrId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub schedule_seed: u64,
    pub shared_names: Vec<String>,
    pub steps: Vec<TraceStep>,
    pub exit: ExitStatus,
    /// Threads whose next instruction could not retire when the run
    /// deadlocked.
    pub blocked: Vec<BlockedInfo>,
    /// Threads never joined before the program exited.
    pub leaked: Vec<LeakInfo>,
    /// Shared-variable values when the run ended, indexed like
    /// `shared_names`.
    pub final_shared: Vec<i64>,
}

impl Trace {
    pub fn new(schedule_seed: u64, shared_names: Vec<String>) -> Trace {
        Trace {
            schedule_seed,
            shared_names,
            steps: Vec::new(),
            exit: ExitStatus::Exit(0),
            blocked: Vec::new(),
            leaked: Vec::new(),
            final_shared: Vec::new(),
        }
    }

    pub fn shared_name(&self, slot: u16) -> &str {
        &self.shared_names[slot as usize]
    }
}

/// Renders the line-per-step dump: `thread_nctx, fn, block, instr_index,
/// opcode`.
pub fn render_trace(trace: &Trace, program: &Program) -> String {
    let table = InstrTable::build(program);
    let mut out = String::new();
    for step in &trace.steps {
        let r = table.loc(step.site);
        let f = &program.functions[r.func];
        let instr = &f.blocks[r.block].instrs[r.idx];
        out.push_str(&format!(
            "{}, {}, {}, {}, {}\n",
            step.thread, f.name, f.blocks[r.block].id, r.idx, instr
        ));
    }
    out.push_str(&format!("# exit: {:?}\n", trace.exit));
    out
}
