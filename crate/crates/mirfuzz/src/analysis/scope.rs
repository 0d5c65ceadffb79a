//! Thread-API site sets and suspicious-interleaving-scope extraction.
//!
//! The scope collects the instructions where thread interleavings can affect
//! shared state. An instruction qualifies when all three conditions hold:
//!
//! - C1: it can execute while more than one thread is alive — it sits in a
//!   function reachable from the forked set, or in the entry function between
//!   a fork site and the join that closes the region;
//! - C2: it is not inside an intra-procedural lock region (some path from the
//!   function entry reaches it with no lock held);
//! - C3: it reads or writes a shared variable. Call sites inherit their
//!   callee's transitive shared accesses (that is how a call passing shared
//!   state stays in scope while the bare lock/unlock sites fall out), and a
//!   function that never writes any shared variable contributes no reads.

use super::icfg::Icfg;
use crate::mtir::{Instr, InstrId, Program};
use std::collections::BTreeSet;

/// Program sites that call into the thread API, plus the derived fork-target
/// and shared-variable sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadSets {
    pub t_fork: BTreeSet<InstrId>,
    pub t_join: BTreeSet<InstrId>,
    pub t_lock: BTreeSet<InstrId>,
    pub t_unlock: BTreeSet<InstrId>,
    /// Shared variable names: globals touched by any function reachable from
    /// the forked set, plus globals touched in the entry function after a
    /// fork site.
    pub t_share_var: BTreeSet<String>,
    /// Functions forked at `t_fork` sites, by index into the program.
    pub f_fork: BTreeSet<usize>,
}

impl ThreadSets {
    pub fn f_fork_names<'p>(&self, program: &'p Program) -> Vec<&'p str> {
        self.f_fork.iter().map(|&i| program.functions[i].name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuspiciousScope {
    pub instructions: BTreeSet<InstrId>,
}

impl SuspiciousScope {
    pub fn empty() -> Self {
        SuspiciousScope { instructions: BTreeSet::new() }
    }

    pub fn contains(&self, id: InstrId) -> bool {
        self.instructions.contains(&id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScopeError {
    #[error("unbalanced locks in function `{0}`: a path releases more locks than it acquired")]
    UnbalancedLocks(String),
}

pub fn compute_thread_sets(program: &Program, icfg: &Icfg) -> ThreadSets {
    let mut sets = ThreadSets {
        t_fork: BTreeSet::new(),
        t_join: BTreeSet::new(),
        t_lock: BTreeSet::new(),
        t_unlock: BTreeSet::new(),
        t_share_var: BTreeSet::new(),
        f_fork: BTreeSet::new(),
    };
    for (fi, f) in program.functions.iter().enumerate() {
        for (bi, b) in f.blocks.iter().enumerate() {
            for (idx, instr) in b.instrs.iter().enumerate() {
                let id = icfg.table.id(fi, bi, idx);
                match instr {
                    Instr::ThreadFork { .. } => {
                        sets.t_fork.insert(id);
                    }
                    Instr::ThreadJoin => {
                        sets.t_join.insert(id);
                    }
                    Instr::LockAcquire { .. } => {
                        sets.t_lock.insert(id);
                    }
                    Instr::LockRelease { .. } => {
                        sets.t_unlock.insert(id);
                    }
                    _ => {}
                }
            }
        }
    }
    for &(_, callee) in &icfg.fork_edges {
        sets.f_fork.insert(callee);
    }

    // Shared variables: everything touched by fork-reachable functions.
    let roots: Vec<usize> = sets.f_fork.iter().copied().collect();
    let reachable = icfg.reachable_functions(program, &roots);
    let touch = |instr: &Instr, sets: &mut ThreadSets| {
        for name in instr.shared_reads() {
            if program.global_index(name).is_some() {
                sets.t_share_var.insert(name.to_string());
            }
        }
        if let Some(name) = instr.shared_writes() {
            if program.global_index(name).is_some() {
                sets.t_share_var.insert(name.to_string());
            }
        }
    };
    for (fi, f) in program.functions.iter().enumerate() {
        if !reachable[fi] {
            continue;
        }
        for b in &f.blocks {
            for instr in &b.instrs {
                touch(instr, &mut sets);
            }
        }
    }
    // Globals touched in the entry function after a fork site: instructions
    // reachable (intra-procedurally) from any fork site's successors.
    if let Some(entry_idx) = program.function_index(&program.entry) {
        let after = instrs_after_forks(program, icfg, entry_idx);
        let f = &program.functions[entry_idx];
        for (bi, b) in f.blocks.iter().enumerate() {
            for (idx, instr) in b.instrs.iter().enumerate() {
                if after[icfg.table.id(entry_idx, bi, idx).0 as usize] {
                    touch(instr, &mut sets);
                }
            }
        }
    }
    sets
}

/// Marks the entry-function instructions reachable from some fork site,
/// following intra-procedural edges from the sites' successors.
fn instrs_after_forks(program: &Program, icfg: &Icfg, func: usize) -> Vec<bool> {
    let mut after = vec![false; icfg.node_count()];
    let mut stack = Vec::new();
    let f = &program.functions[func];
    for (bi, b) in f.blocks.iter().enumerate() {
        for (idx, instr) in b.instrs.iter().enumerate() {
            if matches!(instr, Instr::ThreadFork { .. }) {
                let id = icfg.table.id(func, bi, idx);
                for &s in &icfg.succs[id.0 as usize] {
                    stack.push(s);
                }
            }
        }
    }
    while let Some(id) = stack.pop() {
        if after[id.0 as usize] {
            continue;
        }
        after[id.0 as usize] = true;
        for &s in &icfg.succs[id.0 as usize] {
            stack.push(s);
        }
    }
    after
}

/// C1's entry-function region: the "some forked child may still be running"
/// flag, forward dataflow with fork -> true, join -> false, meet = or. An
/// instruction is in the region when the flag can be true on entry to it.
fn entry_mt_region(program: &Program, icfg: &Icfg, func: usize) -> Vec<bool> {
    let f = &program.functions[func];
    let base = icfg.table.block_entry(func, 0).0 as usize;
    let len: usize = f.blocks.iter().map(|b| b.instrs.len()).sum();
    // in_flag[i], out_flag[i] for local instruction offsets.
    let mut in_flag = vec![false; len];
    let mut out_flag = vec![false; len];
    let mut changed = true;
    while changed {
        changed = false;
        for off in 0..len {
            let id = InstrId((base + off) as u32);
            let r = icfg.loc(id);
            let instr = &f.blocks[r.block].instrs[r.idx];
            let mut inf = in_flag[off];
            for &p in &icfg.preds[id.0 as usize] {
                inf |= out_flag[p.0 as usize - base];
            }
            let outf = match instr {
                Instr::ThreadFork { .. } => true,
                Instr::ThreadJoin => false,
                _ => inf,
            };
            if inf != in_flag[off] || outf != out_flag[off] {
                in_flag[off] = inf;
                out_flag[off] = outf;
                changed = true;
            }
        }
    }
    in_flag
}

/// C2's held-lock-count dataflow for one function: meet is min over
/// predecessors, entry starts at zero, unreachable code stays at "unknown"
/// (treated as locked, i.e. excluded). Errors when a release can drive the
/// count negative.
fn min_held_locks(program: &Program, icfg: &Icfg, func: usize) -> Result<Vec<u32>, ScopeError> {
    const UNREACHED: u32 = u32::MAX;
    let f = &program.functions[func];
    let base = icfg.table.block_entry(func, 0).0 as usize;
    let len: usize = f.blocks.iter().map(|b| b.instrs.len()).sum();
    let mut in_min = vec![UNREACHED; len];
    let mut out_min = vec![UNREACHED; len];
    in_min[0] = 0;
    let mut changed = true;
    while changed {
        changed = false;
        for off in 0..len {
            let id = InstrId((base + off) as u32);
            let r = icfg.loc(id);
            let instr = &f.blocks[r.block].instrs[r.idx];
            let mut inm = in_min[off];
            for &p in &icfg.preds[id.0 as usize] {
                inm = inm.min(out_min[p.0 as usize - base]);
            }
            let outm = if inm == UNREACHED {
                UNREACHED
            } else {
                match instr {
                    Instr::LockAcquire { .. } => inm.saturating_add(1),
                    Instr::LockRelease { .. } => {
                        if inm == 0 {
                            return Err(ScopeError::UnbalancedLocks(f.name.clone()));
                        }
                        inm - 1
                    }
                    _ => inm,
                }
            };
            if inm != in_min[off] || outm != out_min[off] {
                in_min[off] = inm;
                out_min[off] = outm;
                changed = true;
            }
        }
    }
    Ok(in_min)
}

/// Transitive shared-access summaries per function, propagated over call
/// edges only (fork targets run on their own thread and the fork site itself
/// stays out of scope, matching the worked extraction).
struct AccessSummary {
    reads: Vec<BTreeSet<String>>,
    writes: Vec<BTreeSet<String>>,
}

fn access_summaries(program: &Program, icfg: &Icfg, share: &BTreeSet<String>) -> AccessSummary {
    let n = program.functions.len();
    let mut reads: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
    let mut writes: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
    for (fi, f) in program.functions.iter().enumerate() {
        for b in &f.blocks {
            for instr in &b.instrs {
                for name in instr.shared_reads() {
                    if share.contains(name) {
                        reads[fi].insert(name.to_string());
                    }
                }
                if let Some(name) = instr.shared_writes() {
                    if share.contains(name) {
                        writes[fi].insert(name.to_string());
                    }
                }
            }
        }
    }
    let mut callees: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(site, callee) in &icfg.call_edges {
        callees[icfg.loc(site).func].push(callee);
    }
    let mut changed = true;
    while changed {
        changed = false;
        for fi in 0..n {
            for ci in callees[fi].clone() {
                let extra_r: Vec<String> =
                    reads[ci].iter().filter(|v| !reads[fi].contains(*v)).cloned().collect();
                let extra_w: Vec<String> =
                    writes[ci].iter().filter(|v| !writes[fi].contains(*v)).cloned().collect();
                if !extra_r.is_empty() || !extra_w.is_empty() {
                    reads[fi].extend(extra_r);
                    writes[fi].extend(extra_w);
                    changed = true;
                }
            }
        }
    }
    AccessSummary { reads, writes }
}

pub fn extract_suspicious_scope(
    program: &Program,
    icfg: &Icfg,
    sets: &ThreadSets,
) -> Result<SuspiciousScope, ScopeError> {
    let roots: Vec<usize> = sets.f_fork.iter().copied().collect();
    let fork_reachable = icfg.reachable_functions(program, &roots);
    let entry_idx = program.function_index(&program.entry).expect("validated entry");
    let entry_region = entry_mt_region(program, icfg, entry_idx);
    let summaries = access_summaries(program, icfg, &sets.t_share_var);

    // Read-only preprocessing is function-granular: a function with no direct
    // shared store contributes no scope hits from its loads.
    let direct_writes: Vec<bool> = program
        .functions
        .iter()
        .map(|f| {
            f.blocks.iter().flat_map(|b| &b.instrs).any(|i| {
                i.shared_writes().is_some_and(|v| sets.t_share_var.contains(v))
            })
        })
        .collect();

    let mut scope = BTreeSet::new();
    for (fi, f) in program.functions.iter().enumerate() {
        let in_entry = fi == entry_idx;
        if !fork_reachable[fi] && !in_entry {
            continue;
        }
        let held = min_held_locks(program, icfg, fi)?;
        let entry_base = icfg.table.block_entry(fi, 0).0 as usize;
        for (bi, b) in f.blocks.iter().enumerate() {
            for (idx, instr) in b.instrs.iter().enumerate() {
                let id = icfg.table.id(fi, bi, idx);
                let off = id.0 as usize - entry_base;
                let c1 = fork_reachable[fi] || (in_entry && entry_region[off]);
                if !c1 {
                    continue;
                }
                if held[off] != 0 {
                    continue; // C2: locked on every path (or unreachable).
                }
                let (reads, writes) = instr_shared_access(instr, &sets.t_share_var, program, &summaries);
                let c3 = writes || (reads && direct_writes[fi]);
                if c3 {
                    scope.insert(id);
                }
            }
        }
    }
    Ok(SuspiciousScope { instructions: scope })
}

/// Whether the instruction reads/writes any member of the shared set, with
/// call sites carrying their callee's transitive summary.
fn instr_shared_access(
    instr: &Instr,
    share: &BTreeSet<String>,
    program: &Program,
    summaries: &AccessSummary,
) -> (bool, bool) {
    match instr {
        Instr::Call { target, .. } => {
            let callee = program.function_index(target).expect("validated call");
            (!summaries.reads[callee].is_empty(), !summaries.writes[callee].is_empty())
        }
        _ => {
            let reads = instr.shared_reads().iter().any(|v| share.contains(*v));
            let writes = instr.shared_writes().is_some_and(|v| share.contains(v));
            (reads, writes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::build_icfg;
    use crate::mtir::parse_program;

    const FIG1: &str = include_str!("../../benchmarks/fig1.mtir");

    fn scope_triples(src: &str) -> Vec<(String, String, usize)> {
        let p = parse_program(src).unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        let scope = extract_suspicious_scope(&p, &g, &ts).unwrap();
        scope.instructions.iter().map(|&id| g.table.describe(&p, id)).collect()
    }

    #[test]
    fn no_threads_means_empty_sets() {
        let p = parse_program("fn main { b0: x = const 1 exit 0 }").unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        assert!(ts.t_fork.is_empty());
        assert!(ts.f_fork.is_empty());
        assert!(ts.t_share_var.is_empty());
    }

    #[test]
    fn fig1_thread_sets() {
        let p = parse_program(FIG1).unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        assert_eq!(ts.f_fork_names(&p), vec!["compute"]);
        assert_eq!(ts.t_fork.len(), 2);
        assert_eq!(ts.t_join.len(), 1);
        let locks: Vec<_> = ts.t_lock.iter().map(|&id| g.table.describe(&p, id)).collect();
        assert_eq!(locks, [("compute".into(), "k_pos".into(), 0)]);
        let unlocks: Vec<_> = ts.t_unlock.iter().map(|&id| g.table.describe(&p, id)).collect();
        assert_eq!(unlocks, [("compute".into(), "k_pos".into(), 2)]);
        let share: Vec<&str> = ts.t_share_var.iter().map(|s| s.as_str()).collect();
        assert_eq!(share, ["g_var", "s_var"]);
    }

    #[test]
    fn transitive_fork_targets() {
        let src = "fn main { b0: fork a join exit 0 } fn a { a0: fork b join return } fn b { b0: return }";
        let p = parse_program(src).unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        assert_eq!(ts.f_fork_names(&p), vec!["a", "b"]);
    }

    #[test]
    fn fig1_scope_matches_worked_example() {
        // The six scope members: modify's body, compute's two atomic g_var
        // updates, the branch on s_var, the unguarded modify call, and the
        // s_var load before return. The guarded call is excluded by C2, the
        // lock/unlock sites by C3.
        let got = scope_triples(FIG1);
        let want: Vec<(String, String, usize)> = [
            ("compute", "k0", 1),
            ("compute", "k0", 2),
            ("compute", "k0", 3),
            ("compute", "k_neg", 0),
            ("compute", "k_pos", 3),
            ("modify", "m0", 0),
        ]
        .iter()
        .map(|&(f, b, i)| (f.to_string(), b.to_string(), i))
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn threads_without_shared_vars_give_empty_scope() {
        let src = "fn main { b0: fork w join exit 0 } fn w { w0: x = const 1 x = add x, 2 return }";
        assert!(scope_triples(src).is_empty());
    }

    #[test]
    fn dual_context_function_stays_in_scope() {
        // f is called both sequentially from main and from the forked worker;
        // its shared-writing body must still be in scope.
        let src = "global g = 0\n\
                   fn main { b0: call f fork w join exit 0 }\n\
                   fn w { w0: call f return }\n\
                   fn f { f0: store g, add g, 1 return }";
        let got = scope_triples(src);
        assert!(got.contains(&("f".to_string(), "f0".to_string(), 0)));
        // The unguarded call inside the worker carries the callee summary.
        assert!(got.contains(&("w".to_string(), "w0".to_string(), 0)));
    }

    #[test]
    fn read_only_function_contributes_no_scope() {
        let src = "global g = 0\n\
                   fn main { b0: fork w join store g, 1 exit 0 }\n\
                   fn w { w0: x = load g y = load g return }";
        let got = scope_triples(src);
        assert!(got.iter().all(|(f, _, _)| f != "w"));
    }

    #[test]
    fn unbalanced_release_is_an_error() {
        let src = "mutex 1 global g = 0 fn main { b0: fork w join exit 0 } fn w { w0: unlock 0 store g, 1 return }";
        let p = parse_program(src).unwrap();
        let g = build_icfg(&p);
        let ts = compute_thread_sets(&p, &g);
        assert_eq!(
            extract_suspicious_scope(&p, &g, &ts),
            Err(ScopeError::UnbalancedLocks("w".into()))
        );
    }

    #[test]
    fn entry_region_ends_at_join() {
        // Shared stores in main between fork and join are in scope; the one
        // after the join is not.
        let src = "global g = 0\n\
                   fn main { b0: fork w store g, add g, 1 join store g, add g, 5 exit 0 }\n\
                   fn w { w0: store g, mul g, 2 return }";
        let got = scope_triples(src);
        assert!(got.contains(&("main".to_string(), "b0".to_string(), 1)));
        assert!(!got.iter().any(|t| t == &("main".to_string(), "b0".to_string(), 3)));
        assert!(got.contains(&("w".to_string(), "w0".to_string(), 0)));
    }
}
