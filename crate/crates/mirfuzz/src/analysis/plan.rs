//! Coverage-oriented instrumentation planning.
//!
//! Two strategies select deputy instructions:
//!
//! - `AflIns`: every block's entry instruction, unconditionally — the
//!   classic even placement.
//! - `MuzzIns`: stratified placement. Blocks intersecting the suspicious
//!   interleaving scope get their entry instrumented unconditionally and each
//!   scope instruction with probability `P_m(f, b)`; blocks outside the scope
//!   get their entry with probability `P_s(f)`.
//!
//! Probabilities derive from cyclomatic complexity: `P_cc = min(M_c/10, 1)`
//! with `M_c = E - N + 2`, floored at 0.1 when the function's graph is
//! degenerate (`M_c <= 0`); `P_s = min(P_cc, P_s0)`;
//! `P_m = min(P_cc * N_m(b)/N(b), P_m0)`.
//!
//! Placement draws one uniform sample per candidate and compares it against
//! the threshold, so with a fixed seed the sample stream does not depend on
//! the `P_s0`/`P_m0` caps and raising either cap can only add deputies.
//! Labels are drawn from the same generator afterwards; label 0 is reserved
//! as the "no deputy executed yet" sentinel, and labels stay pairwise
//! distinct as long as the deputy count fits the label space.

use super::scope::SuspiciousScope;
use crate::mtir::{count_instructions, Function, InstrId, InstrTable, Program};
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

/// Caps for the selective and scope instrumentation probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentParams {
    pub p_s0: f64,
    pub p_m0: f64,
}

impl Default for InstrumentParams {
    fn default() -> Self {
        InstrumentParams { p_s0: 0.5, p_m0: 0.33 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentMode {
    MuzzIns,
    AflIns,
}

/// Base instrumentation probability from cyclomatic complexity counts.
pub fn p_cc_from_counts(edges: usize, blocks: usize) -> f64 {
    let m_c = edges as i64 - blocks as i64 + 2;
    if m_c <= 0 {
        0.1
    } else {
        (m_c as f64 / 10.0).min(1.0)
    }
}

/// Intra-procedural CFG counts for one function: `(E, N)`. Edges come from
/// terminators; a branch contributes two even when its targets coincide.
pub fn cyclomatic_counts(f: &Function) -> (usize, usize) {
    let edges = f
        .blocks
        .iter()
        .map(|b| match b.instrs.last() {
            Some(i) if matches!(i, crate::mtir::Instr::Branch { .. }) => 2,
            Some(i) if matches!(i, crate::mtir::Instr::Jump { .. }) => 1,
            _ => 0,
        })
        .sum();
    (edges, f.blocks.len())
}

pub fn cyclomatic_probability(f: &Function) -> f64 {
    let (e, n) = cyclomatic_counts(f);
    p_cc_from_counts(e, n)
}

/// `P_s`: probability of instrumenting the entry of a block entirely outside
/// the suspicious scope.
pub fn selective_probability(p_cc: f64, params: &InstrumentParams) -> f64 {
    p_cc.min(params.p_s0)
}

/// `P_m`: probability of instrumenting a non-entry scope instruction inside
/// block `b` with counts `(n_mem, n)`.
pub fn interleaving_probability(p_cc: f64, n_mem: usize, n: usize, params: &InstrumentParams) -> f64 {
    (p_cc * n_mem as f64 / n as f64).min(params.p_m0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAudit {
    pub block_id: String,
    pub n: usize,
    pub n_mem: usize,
    pub p_m: f64,
    pub scope_instrs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionAudit {
    pub function: String,
    pub edges: usize,
    pub blocks: usize,
    pub m_c: i64,
    pub p_cc: f64,
    pub p_s: f64,
    pub per_block: Vec<BlockAudit>,
}

/// The deputy set with labels, plus the probability audit trail.
#[derive(Debug, Clone)]
pub struct InstrumentationPlan {
    pub mode: InstrumentMode,
    pub rng_seed: u64,
    pub params: InstrumentParams,
    pub deputies: BTreeMap<InstrId, u16>,
    pub audit: Vec<FunctionAudit>,
    /// Dense label lookup by instruction id; `None` for non-deputies.
    labels: Vec<Option<u16>>,
}

impl InstrumentationPlan {
    pub fn label(&self, id: InstrId) -> Option<u16> {
        self.labels[id.0 as usize]
    }

    pub fn deputy_count(&self) -> usize {
        self.deputies.len()
    }
}

/// Runs the placement strategy. Pure in `(program, scope, mode, rng_seed,
/// params)`.
pub fn plan_instrumentation(
    program: &Program,
    scope: &SuspiciousScope,
    mode: InstrumentMode,
    rng_seed: u64,
    params: &InstrumentParams,
) -> InstrumentationPlan {
    let table = InstrTable::build(program);
    let mut rng = SplitMix64::new(rng_seed);
    let mut chosen: Vec<InstrId> = Vec::new();
    let mut audit = Vec::with_capacity(program.functions.len());

    for (fi, f) in program.functions.iter().enumerate() {
        let (edges, blocks) = cyclomatic_counts(f);
        let p_cc = p_cc_from_counts(edges, blocks);
        let p_s = selective_probability(p_cc, params);
        let counts = count_instructions(f);
        let mut per_block = Vec::with_capacity(f.blocks.len());
        for (bi, b) in f.blocks.iter().enumerate() {
            let bc = &counts.per_block[bi];
            let p_m = interleaving_probability(p_cc, bc.n_mem, bc.n, params);
            let scope_instrs = (0..b.instrs.len())
                .filter(|&idx| scope.contains(table.id(fi, bi, idx)))
                .count();
            match mode {
                InstrumentMode::AflIns => {
                    chosen.push(table.block_entry(fi, bi));
                }
                InstrumentMode::MuzzIns => {
                    if scope_instrs > 0 {
                        for idx in 0..b.instrs.len() {
                            let id = table.id(fi, bi, idx);
                            let u = rng.next_f64();
                            if idx == 0 {
                                // Entry of a scope block: probability 1. The
                                // draw still happens to keep the stream
                                // aligned across parameter changes.
                                chosen.push(id);
                            } else if scope.contains(id) && u < p_m {
                                chosen.push(id);
                            }
                        }
                    } else {
                        let u = rng.next_f64();
                        if u < p_s {
                            chosen.push(table.block_entry(fi, bi));
                        }
                    }
                }
            }
            per_block.push(BlockAudit {
                block_id: b.id.clone(),
                n: bc.n,
                n_mem: bc.n_mem,
                p_m,
                scope_instrs,
            });
        }
        audit.push(FunctionAudit {
            function: f.name.clone(),
            edges,
            blocks,
            m_c: edges as i64 - blocks as i64 + 2,
            p_cc,
            p_s,
            per_block,
        });
    }

    // Label pass: same generator, after all placement draws.
    let mut deputies = BTreeMap::new();
    let mut labels = vec![None; table.len()];
    let mut used: HashSet<u16> = HashSet::new();
    let enforce_distinct = chosen.len() <= u16::MAX as usize;
    for id in chosen {
        let label = loop {
            let l = 1 + (rng.below(u16::MAX as u64)) as u16;
            if !enforce_distinct || used.insert(l) {
                break l;
            }
        };
        deputies.insert(id, label);
        labels[id.0 as usize] = Some(label);
    }

    InstrumentationPlan { mode, rng_seed, params: *params, deputies, audit, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{build_icfg, compute_thread_sets, extract_suspicious_scope};
    use crate::mtir::parse_program;

    const FIG1: &str = include_str!("../../benchmarks/fig1.mtir");

    fn fig1_plan(mode: InstrumentMode, seed: u64, params: InstrumentParams) -> InstrumentationPlan {
        let p = parse_program(FIG1).unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        let scope = extract_suspicious_scope(&p, &g, &ts).unwrap();
        plan_instrumentation(&p, &scope, mode, seed, &params)
    }

    #[test]
    fn p_cc_examples() {
        assert_eq!(p_cc_from_counts(14, 10), 0.6);
        assert_eq!(p_cc_from_counts(30, 10), 1.0);
        assert_eq!(p_cc_from_counts(0, 1), 0.1);
        assert_eq!(p_cc_from_counts(0, 3), 0.1); // degenerate clamp
    }

    #[test]
    fn p_s_examples() {
        let d = InstrumentParams::default();
        assert_eq!(selective_probability(0.6, &d), 0.5);
        assert_eq!(selective_probability(0.3, &d), 0.3);
        let wide = InstrumentParams { p_s0: 0.9, ..d };
        assert_eq!(selective_probability(0.6, &wide), 0.6);
    }

    #[test]
    fn p_m_examples() {
        let d = InstrumentParams::default();
        assert_eq!(interleaving_probability(1.0, 2, 4, &d), 0.33);
        assert_eq!(interleaving_probability(0.6, 1, 6, &d), 0.6 * 1.0 / 6.0);
        assert_eq!(interleaving_probability(0.8, 0, 5, &d), 0.0);
    }

    #[test]
    fn afl_mode_instruments_every_block_entry() {
        let p = parse_program(FIG1).unwrap();
        let total_blocks: usize = p.functions.iter().map(|f| f.blocks.len()).sum();
        let plan = fig1_plan(InstrumentMode::AflIns, 1, InstrumentParams::default());
        assert_eq!(plan.deputy_count(), total_blocks);
    }

    #[test]
    fn plans_are_deterministic() {
        let a = fig1_plan(InstrumentMode::MuzzIns, 42, InstrumentParams::default());
        let b = fig1_plan(InstrumentMode::MuzzIns, 42, InstrumentParams::default());
        assert_eq!(a.deputies, b.deputies);
        let c = fig1_plan(InstrumentMode::MuzzIns, 43, InstrumentParams::default());
        assert!(a.deputies != c.deputies || a.rng_seed != c.rng_seed);
    }

    #[test]
    fn scope_block_entries_always_instrumented() {
        let p = parse_program(FIG1).unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        let scope = extract_suspicious_scope(&p, &g, &ts).unwrap();
        for seed in 0..20 {
            let plan =
                plan_instrumentation(&p, &scope, InstrumentMode::MuzzIns, seed, &InstrumentParams::default());
            for (fi, f) in p.functions.iter().enumerate() {
                for (bi, b) in f.blocks.iter().enumerate() {
                    let has_scope =
                        (0..b.instrs.len()).any(|i| scope.contains(g.table.id(fi, bi, i)));
                    if has_scope {
                        assert!(plan.label(g.table.block_entry(fi, bi)).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn raising_caps_never_removes_deputies() {
        let base = InstrumentParams::default();
        for seed in 0..40 {
            let small = fig1_plan(InstrumentMode::MuzzIns, seed, base);
            for (p_s0, p_m0) in [(0.9, 0.33), (0.5, 0.9), (1.0, 1.0)] {
                let big = fig1_plan(InstrumentMode::MuzzIns, seed, InstrumentParams { p_s0, p_m0 });
                for id in small.deputies.keys() {
                    assert!(big.deputies.contains_key(id), "seed {seed}: deputy lost");
                }
            }
        }
    }

    #[test]
    fn labels_distinct_and_nonzero() {
        let plan = fig1_plan(InstrumentMode::AflIns, 9, InstrumentParams::default());
        let mut seen = std::collections::HashSet::new();
        for &l in plan.deputies.values() {
            assert_ne!(l, 0);
            assert!(seen.insert(l));
        }
    }

    #[test]
    fn forcing_p_m_to_one_includes_all_scope_instrs() {
        let p = parse_program(FIG1).unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        let scope = extract_suspicious_scope(&p, &g, &ts).unwrap();
        // p_m0 = 1.0 does not force p_m to 1; instead check with a scope
        // where every block ratio already saturates: here just assert scope
        // members whose block ratio is 1.0 under the cap get chosen across
        // many seeds when p_m0 = 1.0 and p_cc = 1.0 is not guaranteed, so use
        // the union over seeds to cover sampling.
        let mut union: std::collections::BTreeSet<InstrId> = Default::default();
        for seed in 0..200 {
            let plan = plan_instrumentation(
                &p,
                &scope,
                InstrumentMode::MuzzIns,
                seed,
                &InstrumentParams { p_s0: 1.0, p_m0: 1.0 },
            );
            union.extend(plan.deputies.keys().copied());
        }
        for id in &scope.instructions {
            let r = g.loc(*id);
            if r.idx != 0 {
                assert!(union.contains(id), "scope instr never sampled");
            }
        }
    }
}
