//! The interpreter loop and simulated scheduler.
//!
//! Scheduling model: at each step the set of *ready* threads is computed — a
//! thread is ready when its next instruction can retire now (a lock only
//! when the mutex is free, a join only when every child has finished). One
//! ready thread is picked with probability proportional to its priority and
//! retires exactly one instruction. Mutexes are not reentrant: re-acquiring
//! a held mutex blocks the thread forever. A thread that blocks consumes no
//! steps while blocked.
//!
//! Program end: `exit` from any thread (a return from the entry function's
//! root frame counts as `exit 0`), a crash, deadlock (no ready thread and at
//! least one unfinished), or step-budget exhaustion.

use super::compile::{CAtom, CExpr, CInstr, COp, CompiledProgram};
use super::trace::{BlockedInfo, BlockedKind, LeakInfo, Trace, TraceOp, TraceStep};
use super::{
    ContextAccumulator, ContextSignature, CoverageMap, ExecutionResult, ExitStatus, Frame,
    SchedulerConfig,
};
use crate::mtir::ArithOp;
use crate::rng::SplitMix64;

struct FrameSt {
    func: u32,
    block: u32,
    pc: u32,
    locals: Vec<i64>,
}

struct ThreadSt {
    n_ctx: u32,
    priority: u64,
    frames: Vec<FrameSt>,
    prev_label: u16,
    children: Vec<usize>,
    joined: bool,
    finished: bool,
    /// Fork site that created this thread (main: none).
    fork_site: Option<crate::mtir::InstrId>,
}

impl ThreadSt {
    fn top(&self) -> &FrameSt {
        self.frames.last().expect("running thread has a frame")
    }
}

enum StepOutcome {
    Continue,
    End(ExitStatus),
}

pub(super) fn run(
    prog: &CompiledProgram,
    input: &[u8],
    cfg: &SchedulerConfig,
    mut trace: Option<&mut Trace>,
) -> ExecutionResult {
    let mut rng = SplitMix64::new(cfg.schedule_rng_seed);
    let mut shared: Vec<i64> = prog.shared_init.clone();
    let mut mutex_owner: Vec<Option<usize>> = vec![None; prog.mutex_count as usize];
    let mut coverage = CoverageMap::new();
    let mut ctx = ContextAccumulator::new();
    let mut steps: u64 = 0;
    let mut threads_forked: u32 = 0;
    let mut next_ctx: u32 = 1;

    let entry = prog.entry as usize;
    let mut threads: Vec<ThreadSt> = vec![ThreadSt {
        n_ctx: 0,
        priority: 1,
        frames: vec![FrameSt {
            func: prog.entry,
            block: 0,
            pc: 0,
            locals: vec![0; prog.funcs[entry].n_slots as usize],
        }],
        prev_label: 0,
        children: Vec::new(),
        joined: true,
        finished: false,
        fork_site: None,
    }];

    let mut ready: Vec<usize> = Vec::with_capacity(8);
    let exit = loop {
        if steps >= cfg.max_steps {
            break ExitStatus::StepBudgetExhausted;
        }
        ready.clear();
        let mut total_priority: u64 = 0;
        let mut any_unfinished = false;
        for (ti, t) in threads.iter().enumerate() {
            if t.finished {
                continue;
            }
            any_unfinished = true;
            let instr = current_instr(prog, t);
            let ok = match &instr.op {
                COp::Lock { mutex } => mutex_owner[*mutex as usize].is_none(),
                COp::Join => t.children.iter().all(|&c| threads[c].finished),
                _ => true,
            };
            if ok {
                ready.push(ti);
                total_priority += t.priority;
            }
        }
        if ready.is_empty() {
            debug_assert!(any_unfinished, "entry thread end must end the program");
            break ExitStatus::Deadlock;
        }
        let ti = if ready.len() == 1 {
            ready[0]
        } else {
            let mut r = rng.below(total_priority);
            let mut pick = ready[0];
            for &cand in &ready {
                let p = threads[cand].priority;
                if r < p {
                    pick = cand;
                    break;
                }
                r -= p;
            }
            pick
        };
        steps += 1;
        match step_thread(
            prog,
            &mut threads,
            ti,
            input,
            &mut shared,
            &mut mutex_owner,
            &mut coverage,
            &mut ctx,
            &mut rng,
            cfg,
            &mut threads_forked,
            &mut next_ctx,
            &mut trace,
        ) {
            StepOutcome::Continue => {}
            StepOutcome::End(status) => break status,
        }
    };

    if let Some(tr) = trace.as_deref_mut() {
        tr.final_shared = shared.clone();
        match exit {
            ExitStatus::Exit(_) => {
                for t in &threads {
                    if !t.joined {
                        tr.leaked.push(LeakInfo {
                            thread: t.n_ctx,
                            fork_site: t.fork_site.expect("non-entry thread has a fork site"),
                        });
                    }
                }
            }
            ExitStatus::Deadlock => {
                for t in &threads {
                    if t.finished {
                        continue;
                    }
                    let instr = current_instr(prog, t);
                    let kind = match &instr.op {
                        COp::Lock { mutex } => BlockedKind::Lock(*mutex),
                        COp::Join => BlockedKind::Join,
                        _ => continue,
                    };
                    tr.blocked.push(BlockedInfo { thread: t.n_ctx, site: instr.id, kind });
                }
            }
            _ => {}
        }
    }

    let is_mt = threads_forked > 0;
    ExecutionResult {
        exit,
        coverage,
        s_ctx: if is_mt { ctx.signature() } else { ContextSignature::EMPTY },
        is_mt,
        steps,
        threads_forked,
    }
}

fn current_instr<'p>(prog: &'p CompiledProgram, t: &ThreadSt) -> &'p CInstr {
    let f = t.top();
    &prog.funcs[f.func as usize].blocks[f.block as usize].instrs[f.pc as usize]
}

#[allow(clippy::too_many_arguments)]
fn step_thread(
    prog: &CompiledProgram,
    threads: &mut Vec<ThreadSt>,
    ti: usize,
    input: &[u8],
    shared: &mut [i64],
    mutex_owner: &mut [Option<usize>],
    coverage: &mut CoverageMap,
    ctx: &mut ContextAccumulator,
    rng: &mut SplitMix64,
    cfg: &SchedulerConfig,
    threads_forked: &mut u32,
    next_ctx: &mut u32,
    trace: &mut Option<&mut Trace>,
) -> StepOutcome {
    // Borrows only from `prog`, so `threads` stays free for mutation.
    let instr: &CInstr = current_instr(prog, &threads[ti]);

    // Deputy fires first, so a context event at this site sees this label.
    if let Some(label) = instr.label {
        let prev = threads[ti].prev_label;
        coverage.hit(prev, label);
        threads[ti].prev_label = label;
    }

    let n_ctx = threads[ti].n_ctx;
    let eval_atom = |a: &CAtom, t: &ThreadSt, shared: &[i64]| -> i64 {
        match a {
            CAtom::Local(slot) => t.top().locals[*slot as usize],
            CAtom::Const(v) => *v,
            CAtom::Shared(slot) => shared[*slot as usize],
        }
    };
    let mut record = |op: TraceOp, trace: &mut Option<&mut Trace>| {
        if let Some(tr) = trace.as_deref_mut() {
            tr.steps.push(TraceStep { thread: n_ctx, site: instr.id, op });
        }
    };
    let crash = |threads: &[ThreadSt], ti: usize, tag: &str| -> StepOutcome {
        StepOutcome::End(ExitStatus::Crash {
            tag: tag.to_string(),
            backtrace: backtrace(prog, &threads[ti]),
        })
    };

    let mut advance = true;
    match &instr.op {
        COp::Const { dest, value } => {
            let t = &mut threads[ti];
            let d = *dest as usize;
            t.frames.last_mut().unwrap().locals[d] = *value;
            record(TraceOp::Other, trace);
        }
        COp::Arith { dest, op, lhs, rhs } => {
            let l = eval_atom(lhs, &threads[ti], shared);
            let r = eval_atom(rhs, &threads[ti], shared);
            let v = match apply_arith(*op, l, r) {
                Some(v) => v,
                None => return crash(threads, ti, "div-by-zero"),
            };
            threads[ti].frames.last_mut().unwrap().locals[*dest as usize] = v;
            record(TraceOp::Other, trace);
        }
        COp::Load { dest, slot } => {
            let v = shared[*slot as usize];
            threads[ti].frames.last_mut().unwrap().locals[*dest as usize] = v;
            record(TraceOp::Access { reads: vec![*slot], writes: vec![] }, trace);
        }
        COp::LoadUndeclared { .. } | COp::StoreUndeclared { .. } => {
            return crash(threads, ti, "undeclared-shared");
        }
        COp::Store { slot, expr } => {
            let mut reads = Vec::new();
            let v = match expr {
                CExpr::Atom(a) => {
                    if let CAtom::Shared(s) = a {
                        reads.push(*s);
                    }
                    eval_atom(a, &threads[ti], shared)
                }
                CExpr::Bin { op, lhs, rhs } => {
                    for a in [lhs, rhs] {
                        if let CAtom::Shared(s) = a {
                            reads.push(*s);
                        }
                    }
                    let l = eval_atom(lhs, &threads[ti], shared);
                    let r = eval_atom(rhs, &threads[ti], shared);
                    match apply_arith(*op, l, r) {
                        Some(v) => v,
                        None => return crash(threads, ti, "div-by-zero"),
                    }
                }
            };
            shared[*slot as usize] = v;
            record(TraceOp::Access { reads, writes: vec![*slot] }, trace);
        }
        COp::Input { dest, offset } => {
            let off = eval_atom(offset, &threads[ti], shared);
            let v = if off >= 0 && (off as usize) < input.len() { input[off as usize] as i64 } else { 0 };
            threads[ti].frames.last_mut().unwrap().locals[*dest as usize] = v;
            record(TraceOp::Other, trace);
        }
        COp::InputLen { dest } => {
            threads[ti].frames.last_mut().unwrap().locals[*dest as usize] = input.len() as i64;
            record(TraceOp::Other, trace);
        }
        COp::Branch { cond, then_block, else_block } => {
            let mut reads = Vec::new();
            if let CAtom::Shared(s) = cond {
                reads.push(*s);
            }
            let c = eval_atom(cond, &threads[ti], shared);
            let target = if c != 0 { *then_block } else { *else_block };
            let f = threads[ti].frames.last_mut().unwrap();
            f.block = target;
            f.pc = 0;
            advance = false;
            let op = if reads.is_empty() {
                TraceOp::Other
            } else {
                TraceOp::Access { reads, writes: vec![] }
            };
            record(op, trace);
        }
        COp::Jump { target } => {
            let f = threads[ti].frames.last_mut().unwrap();
            f.block = *target;
            f.pc = 0;
            advance = false;
            record(TraceOp::Other, trace);
        }
        COp::Call { func, args } => {
            let callee = &prog.funcs[*func as usize];
            let mut locals = vec![0i64; callee.n_slots as usize];
            for (i, a) in args.iter().enumerate() {
                locals[i] = eval_atom(a, &threads[ti], shared);
            }
            // Return resumes after the call.
            threads[ti].frames.last_mut().unwrap().pc += 1;
            threads[ti].frames.push(FrameSt { func: *func, block: 0, pc: 0, locals });
            advance = false;
            record(TraceOp::Other, trace);
        }
        COp::Return => {
            record(TraceOp::Other, trace);
            let t = &mut threads[ti];
            t.frames.pop();
            advance = false;
            if t.frames.is_empty() {
                t.finished = true;
                if ti == 0 {
                    // Entry function returned: program exit.
                    return StepOutcome::End(ExitStatus::Exit(0));
                }
            }
        }
        COp::Exit { code } => {
            let c = eval_atom(code, &threads[ti], shared);
            record(TraceOp::Other, trace);
            return StepOutcome::End(ExitStatus::Exit(c));
        }
        COp::Crash { tag } => {
            record(TraceOp::Other, trace);
            return crash(threads, ti, tag);
        }
        COp::Fork { func, arg } => {
            let callee = &prog.funcs[*func as usize];
            let mut locals = vec![0i64; callee.n_slots as usize];
            if let Some(a) = arg {
                locals[0] = eval_atom(a, &threads[ti], shared);
            }
            let child_ctx = *next_ctx;
            *next_ctx += 1;
            *threads_forked += 1;
            let priority = if cfg.intervention_enabled { 1 + rng.below(32) } else { 1 };
            let child_idx = threads.len();
            threads.push(ThreadSt {
                n_ctx: child_ctx,
                priority,
                frames: vec![FrameSt { func: *func, block: 0, pc: 0, locals }],
                prev_label: 0,
                children: Vec::new(),
                joined: false,
                finished: false,
                fork_site: Some(instr.id),
            });
            threads[ti].children.push(child_idx);
            record(TraceOp::Fork { child: child_ctx }, trace);
        }
        COp::Join => {
            // Ready check guaranteed every child finished.
            let children: Vec<usize> = threads[ti].children.drain(..).collect();
            let mut ids = Vec::with_capacity(children.len());
            for c in children {
                threads[c].joined = true;
                ids.push(threads[c].n_ctx);
            }
            ctx.join_event(threads[ti].prev_label, n_ctx);
            record(TraceOp::Join { children: ids }, trace);
        }
        COp::Lock { mutex } => {
            debug_assert!(mutex_owner[*mutex as usize].is_none());
            mutex_owner[*mutex as usize] = Some(ti);
            ctx.lock_event(threads[ti].prev_label, n_ctx);
            record(TraceOp::Lock(*mutex), trace);
        }
        COp::Unlock { mutex } => {
            if mutex_owner[*mutex as usize] != Some(ti) {
                return crash(threads, ti, "unlock-not-held");
            }
            mutex_owner[*mutex as usize] = None;
            ctx.unlock_event(threads[ti].prev_label, n_ctx);
            record(TraceOp::Unlock(*mutex), trace);
        }
        COp::Nop => {
            record(TraceOp::Other, trace);
        }
    }

    if advance {
        let f = threads[ti].frames.last_mut().unwrap();
        f.pc += 1;
    }
    StepOutcome::Continue
}

fn apply_arith(op: ArithOp, l: i64, r: i64) -> Option<i64> {
    Some(match op {
        ArithOp::Add => l.wrapping_add(r),
        ArithOp::Sub => l.wrapping_sub(r),
        ArithOp::Mul => l.wrapping_mul(r),
        ArithOp::Div => {
            if r == 0 {
                return None;
            }
            l.wrapping_div(r)
        }
    })
}

fn backtrace(prog: &CompiledProgram, t: &ThreadSt) -> Vec<Frame> {
    t.frames
        .iter()
        .map(|f| {
            let func = &prog.funcs[f.func as usize];
            Frame {
                function: func.name.clone(),
                block: func.blocks[f.block as usize].id.clone(),
                instr: f.pc as usize,
            }
        })
        .collect()
}
