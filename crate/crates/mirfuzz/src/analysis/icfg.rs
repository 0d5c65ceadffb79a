//! Thread-aware interprocedural control-flow graph.
//!
//! Nodes are instructions (one node per instruction, addressed by
//! [`InstrId`]). Intra-procedural edges are the fallthrough from each
//! instruction to the next in its block plus terminator edges to target block
//! entries. Call and fork sites get interprocedural edges to the callee's
//! entry instruction; the mini-IR has no indirect calls, so both resolve by
//! name.

use crate::mtir::{Instr, InstrId, InstrRef, InstrTable, Program};

#[derive(Debug, Clone)]
pub struct Icfg {
    pub table: InstrTable,
    /// Intra-procedural successors per instruction.
    pub succs: Vec<Vec<InstrId>>,
    /// Reverse of `succs`, for backward reachability queries.
    pub preds: Vec<Vec<InstrId>>,
    /// `Call` site -> callee function index.
    pub call_edges: Vec<(InstrId, usize)>,
    /// `ThreadFork` site -> forked function index.
    pub fork_edges: Vec<(InstrId, usize)>,
    /// Intra-procedural CFG edge count per function, blocks as nodes. Branch
    /// terminators contribute two edges even when both targets coincide.
    pub block_edges: Vec<usize>,
}

pub fn build_icfg(program: &Program) -> Icfg {
    let table = InstrTable::build(program);
    let n = table.len();
    let mut succs: Vec<Vec<InstrId>> = vec![Vec::new(); n];
    let mut call_edges = Vec::new();
    let mut fork_edges = Vec::new();
    let mut block_edges = vec![0usize; program.functions.len()];

    for (fi, f) in program.functions.iter().enumerate() {
        for (bi, b) in f.blocks.iter().enumerate() {
            for (idx, instr) in b.instrs.iter().enumerate() {
                let id = table.id(fi, bi, idx);
                let last = idx + 1 == b.instrs.len();
                if !last {
                    succs[id.0 as usize].push(table.id(fi, bi, idx + 1));
                }
                match instr {
                    Instr::Branch { then_block, else_block, .. } => {
                        for target in [then_block, else_block] {
                            let tb = f.block_index(target).expect("validated target");
                            succs[id.0 as usize].push(table.block_entry(fi, tb));
                            block_edges[fi] += 1;
                        }
                    }
                    Instr::Jump { target } => {
                        let tb = f.block_index(target).expect("validated target");
                        succs[id.0 as usize].push(table.block_entry(fi, tb));
                        block_edges[fi] += 1;
                    }
                    Instr::Call { target, .. } => {
                        call_edges.push((id, program.function_index(target).unwrap()));
                    }
                    Instr::ThreadFork { target, .. } => {
                        fork_edges.push((id, program.function_index(target).unwrap()));
                    }
                    _ => {}
                }
            }
        }
    }

    let mut preds: Vec<Vec<InstrId>> = vec![Vec::new(); n];
    for (from, ss) in succs.iter().enumerate() {
        for &to in ss {
            preds[to.0 as usize].push(InstrId(from as u32));
        }
    }

    Icfg { table, succs, preds, call_edges, fork_edges, block_edges }
}

impl Icfg {
    pub fn node_count(&self) -> usize {
        self.table.len()
    }

    pub fn loc(&self, id: InstrId) -> InstrRef {
        self.table.loc(id)
    }

    /// Functions reachable from `roots` along call and fork edges,
    /// including the roots themselves.
    pub fn reachable_functions(&self, program: &Program, roots: &[usize]) -> Vec<bool> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); program.functions.len()];
        for &(site, callee) in self.call_edges.iter().chain(self.fork_edges.iter()) {
            let caller = self.loc(site).func;
            adj[caller].push(callee);
        }
        let mut seen = vec![false; program.functions.len()];
        let mut stack: Vec<usize> = roots.to_vec();
        while let Some(f) = stack.pop() {
            if seen[f] {
                continue;
            }
            seen[f] = true;
            for &g in &adj[f] {
                if !seen[g] {
                    stack.push(g);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtir::parse_program;

    const FIG1: &str = include_str!("../../benchmarks/fig1.mtir");

    #[test]
    fn straight_line_has_no_interprocedural_edges() {
        let p = parse_program("fn main { b0: x = const 1 exit 0 }").unwrap();
        let g = build_icfg(&p);
        assert_eq!(g.node_count(), 2);
        assert!(g.call_edges.is_empty());
        assert!(g.fork_edges.is_empty());
        assert_eq!(g.succs[0], vec![crate::mtir::InstrId(1)]);
        assert_eq!(g.block_edges, vec![0]);
    }

    #[test]
    fn fig1_edges() {
        let p = parse_program(FIG1).unwrap();
        let g = build_icfg(&p);
        assert_eq!(g.node_count(), p.total_instrs());
        let compute = p.function_index("compute").unwrap();
        let modify = p.function_index("modify").unwrap();
        let check = p.function_index("check").unwrap();
        let forks: Vec<usize> = g.fork_edges.iter().map(|&(_, f)| f).collect();
        assert_eq!(forks, vec![compute, compute]);
        let callee_of = |caller: usize| -> Vec<usize> {
            g.call_edges
                .iter()
                .filter(|&&(site, _)| g.loc(site).func == caller)
                .map(|&(_, c)| c)
                .collect()
        };
        assert_eq!(callee_of(check), vec![modify]);
        assert_eq!(callee_of(compute), vec![modify, modify]);
    }

    #[test]
    fn call_in_loop_is_one_static_edge() {
        let src = "fn main { b0: i = const 3 jump b1 b1: call f i = sub i, 1 branch i, b1, b2 b2: exit 0 } fn f { f0: return }";
        let p = parse_program(src).unwrap();
        let g = build_icfg(&p);
        assert_eq!(g.call_edges.len(), 1);
    }

    #[test]
    fn fork_reachability_is_transitive() {
        let src = "fn main { b0: fork a join exit 0 } fn a { a0: fork b join return } fn b { b0: return }";
        let p = parse_program(src).unwrap();
        let g = build_icfg(&p);
        let a = p.function_index("a").unwrap();
        let b = p.function_index("b").unwrap();
        let reach = g.reachable_functions(&p, &[a]);
        assert!(reach[a] && reach[b]);
        assert!(!reach[p.function_index("main").unwrap()]);
    }
}
