//! Thread-aware static analysis and instrumentation planning.

mod icfg;
mod plan;
mod scope;

pub use icfg::{build_icfg, Icfg};
pub use plan::{
    cyclomatic_counts, cyclomatic_probability, interleaving_probability, p_cc_from_counts,
    plan_instrumentation, selective_probability, BlockAudit, FunctionAudit, InstrumentMode,
    InstrumentParams, InstrumentationPlan,
};
pub use scope::{compute_thread_sets, extract_suspicious_scope, ScopeError, SuspiciousScope, ThreadSets};

use crate::mtir::Program;
use serde::{Deserialize, Serialize};

/// Everything the static stage produces for one program and mode, bundled
/// for the executor and the fuzzing loop.
pub struct Analysis {
    pub icfg: Icfg,
    pub thread_sets: ThreadSets,
    pub scope: SuspiciousScope,
    pub plan: InstrumentationPlan,
}

/// Runs the full static pipeline and plans instrumentation.
pub fn analyze_program(
    program: &Program,
    mode: InstrumentMode,
    rng_seed: u64,
    params: &InstrumentParams,
) -> Result<Analysis, ScopeError> {
    let icfg = build_icfg(program);
    let thread_sets = compute_thread_sets(program, &icfg);
    let scope = match mode {
        InstrumentMode::MuzzIns => extract_suspicious_scope(program, &icfg, &thread_sets)?,
        // The even strategy ignores the scope; skip extraction so lock
        // imbalances in dead threads cannot fail an even-mode plan.
        InstrumentMode::AflIns => SuspiciousScope::empty(),
    };
    let plan = plan_instrumentation(program, &scope, mode, rng_seed, params);
    Ok(Analysis { icfg, thread_sets, scope, plan })
}

/// JSON audit report for the `analyze` subcommand: per-function
/// probabilities, scope membership, and the deputy list with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub mode: InstrumentMode,
    pub rng_seed: u64,
    pub p_s0: f64,
    pub p_m0: f64,
    pub functions: Vec<FunctionAudit>,
    pub fork_functions: Vec<String>,
    pub shared_vars: Vec<String>,
    pub scope: Vec<InstrLoc>,
    pub deputies: Vec<DeputyLoc>,
    pub block_count: usize,
    pub deputy_count: usize,
    /// `(deputies - blocks) / blocks`, the instrumentation inflation ratio
    /// relative to even placement.
    pub inflation_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrLoc {
    pub function: String,
    pub block: String,
    pub idx: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeputyLoc {
    pub function: String,
    pub block: String,
    pub idx: usize,
    pub label: u16,
}

impl Analysis {
    pub fn report(&self, program: &Program) -> AnalysisReport {
        let table = &self.icfg.table;
        let scope = self
            .scope
            .instructions
            .iter()
            .map(|&id| {
                let (function, block, idx) = table.describe(program, id);
                InstrLoc { function, block, idx }
            })
            .collect();
        let deputies: Vec<DeputyLoc> = self
            .plan
            .deputies
            .iter()
            .map(|(&id, &label)| {
                let (function, block, idx) = table.describe(program, id);
                DeputyLoc { function, block, idx, label }
            })
            .collect();
        let block_count: usize = program.functions.iter().map(|f| f.blocks.len()).sum();
        let deputy_count = deputies.len();
        AnalysisReport {
            mode: self.plan.mode,
            rng_seed: self.plan.rng_seed,
            p_s0: self.plan.params.p_s0,
            p_m0: self.plan.params.p_m0,
            functions: self.plan.audit.clone(),
            fork_functions: self
                .thread_sets
                .f_fork_names(program)
                .into_iter()
                .map(String::from)
                .collect(),
            shared_vars: self.thread_sets.t_share_var.iter().cloned().collect(),
            scope,
            deputies,
            block_count,
            deputy_count,
            inflation_ratio: (deputy_count as f64 - block_count as f64) / block_count as f64,
        }
    }
}
