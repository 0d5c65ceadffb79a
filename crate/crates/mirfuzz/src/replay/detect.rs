//! Trace-level concurrency-violation detectors.
//!
//! Data races use the hybrid model: two accesses to the same shared variable
//! from different threads, at least one write, concurrent under vector
//! clocks synchronized at fork/join and lock release-to-acquire edges, and
//! holding no common lock. With full lock synchronization the lockset check
//! is implied, but both are evaluated as stated.
//!
//! Lock-order inversion builds the per-trace lock graph (edge `a -> b` when
//! a thread acquires `b` while holding `a`) and reports opposite-order pairs
//! taken by different threads. Deadlocks and thread-leaks read directly off
//! the trace's end-state facts.

use super::vclock::VectorClock;
use crate::executor::{BlockedKind, ExitStatus, Trace, TraceOp};
use crate::mtir::InstrId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    DataRace,
    LockOrderInversion,
    Deadlock,
    ThreadLeak,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Instruction sites, sorted; equal for self-pairs (e.g. both threads
    /// racing at the same store).
    pub sites: (InstrId, InstrId),
    /// Shared variable for races, `mN<->mM` for inversions, empty otherwise.
    pub var: String,
    pub threads: (u32, u32),
    pub schedule_seed: u64,
}

/// Root-cause key: violations with the same kind, sites, and variable are
/// one bug.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BugKey {
    pub kind: ViolationKind,
    pub sites: (InstrId, InstrId),
    pub var: String,
}

impl BugKey {
    pub fn of(v: &Violation) -> BugKey {
        BugKey { kind: v.kind, sites: v.sites, var: v.var.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
}

struct Access {
    thread: u32,
    site: InstrId,
    write: bool,
    clock: VectorClock,
    lockset: BTreeSet<u32>,
}

fn sorted_sites(a: InstrId, b: InstrId) -> (InstrId, InstrId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn detect_violations(trace: &Trace) -> Result<Vec<Violation>, DetectError> {
    let seed = trace.schedule_seed;
    let malformed = |msg: String| Err(DetectError::MalformedTrace(msg));

    let mut clocks: BTreeMap<u32, VectorClock> = BTreeMap::new();
    clocks.insert(0, VectorClock::new());
    let mut release_clock: BTreeMap<u32, VectorClock> = BTreeMap::new();
    let mut owner: BTreeMap<u32, u32> = BTreeMap::new();
    let mut held: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    held.insert(0, BTreeSet::new());
    // Per shared slot: every access seen so far.
    let mut accesses: BTreeMap<u16, Vec<Access>> = BTreeMap::new();
    // Lock graph edges: (outer, inner) -> (thread, inner-acquire site) set.
    let mut lock_edges: BTreeMap<(u32, u32), Vec<(u32, InstrId)>> = BTreeMap::new();

    let mut violations = Vec::new();
    let mut seen_races: BTreeSet<(InstrId, InstrId, u16)> = BTreeSet::new();

    for step in &trace.steps {
        let t = step.thread;
        if !clocks.contains_key(&t) {
            return malformed(format!("thread {t} acts before being forked"));
        }
        match &step.op {
            TraceOp::Fork { child } => {
                if clocks.contains_key(child) {
                    return malformed(format!("thread {child} forked twice"));
                }
                let parent_clock = {
                    let c = clocks.get_mut(&t).unwrap();
                    c.tick(t);
                    c.clone()
                };
                clocks.insert(*child, parent_clock);
                held.insert(*child, BTreeSet::new());
            }
            TraceOp::Join { children } => {
                let child_clocks: Vec<VectorClock> = children
                    .iter()
                    .map(|c| {
                        clocks
                            .get(c)
                            .cloned()
                            .ok_or_else(|| DetectError::MalformedTrace(format!("join of unknown thread {c}")))
                    })
                    .collect::<Result<_, _>>()?;
                let c = clocks.get_mut(&t).unwrap();
                for cc in &child_clocks {
                    c.join(cc);
                }
                c.tick(t);
            }
            TraceOp::Lock(m) => {
                if owner.contains_key(m) {
                    return malformed(format!("mutex {m} acquired while held"));
                }
                owner.insert(*m, t);
                let holding = held.get_mut(&t).unwrap();
                for &outer in holding.iter() {
                    lock_edges.entry((outer, *m)).or_default().push((t, step.site));
                }
                holding.insert(*m);
                let c = clocks.get_mut(&t).unwrap();
                if let Some(rc) = release_clock.get(m) {
                    c.join(rc);
                }
                c.tick(t);
            }
            TraceOp::Unlock(m) => {
                if owner.get(m) != Some(&t) {
                    return malformed(format!("mutex {m} released by non-owner"));
                }
                owner.remove(m);
                held.get_mut(&t).unwrap().remove(m);
                let c = clocks.get_mut(&t).unwrap();
                c.tick(t);
                release_clock.insert(*m, c.clone());
            }
            TraceOp::Access { reads, writes } => {
                let clock = {
                    let c = clocks.get_mut(&t).unwrap();
                    c.tick(t);
                    c.clone()
                };
                let lockset = held.get(&t).unwrap().clone();
                let mut touch = |slot: u16, write: bool| {
                    let list = accesses.entry(slot).or_default();
                    for prev in list.iter() {
                        if prev.thread == t || !(prev.write || write) {
                            continue;
                        }
                        // Trace order: prev happened first, so ordered iff
                        // prev's own component is visible here.
                        let ordered = prev.clock.get(prev.thread) <= clock.get(prev.thread);
                        let disjoint = prev.lockset.is_disjoint(&lockset);
                        if !ordered && disjoint {
                            let sites = sorted_sites(prev.site, step.site);
                            if seen_races.insert((sites.0, sites.1, slot)) {
                                violations.push(Violation {
                                    kind: ViolationKind::DataRace,
                                    sites,
                                    var: trace.shared_name(slot).to_string(),
                                    threads: (prev.thread.min(t), prev.thread.max(t)),
                                    schedule_seed: seed,
                                });
                            }
                        }
                    }
                    list.push(Access { thread: t, site: step.site, write, clock: clock.clone(), lockset: lockset.clone() });
                };
                for &slot in reads {
                    touch(slot, false);
                }
                for &slot in writes {
                    touch(slot, true);
                }
            }
            TraceOp::Other => {}
        }
    }

    // Opposite-order lock pairs from different threads.
    let mut seen_inversions: BTreeSet<(u32, u32)> = BTreeSet::new();
    for (&(a, b), takers) in &lock_edges {
        if a >= b {
            continue;
        }
        if let Some(reverse) = lock_edges.get(&(b, a)) {
            for &(t1, site1) in takers {
                for &(t2, site2) in reverse {
                    if t1 != t2 && seen_inversions.insert((a, b)) {
                        violations.push(Violation {
                            kind: ViolationKind::LockOrderInversion,
                            sites: sorted_sites(site1, site2),
                            var: format!("m{a}<->m{b}"),
                            threads: (t1.min(t2), t1.max(t2)),
                            schedule_seed: seed,
                        });
                    }
                }
            }
        }
    }

    if trace.exit == ExitStatus::Deadlock {
        let mut blocked = trace.blocked.clone();
        blocked.sort_by_key(|b| b.thread);
        let lock_blocked: Vec<_> =
            blocked.iter().filter(|b| matches!(b.kind, BlockedKind::Lock(_))).collect();
        let (sites, threads) = match lock_blocked.as_slice() {
            [a, b, ..] => (sorted_sites(a.site, b.site), (a.thread.min(b.thread), a.thread.max(b.thread))),
            [a] => ((a.site, a.site), (a.thread, a.thread)),
            [] => match blocked.first() {
                Some(a) => ((a.site, a.site), (a.thread, a.thread)),
                None => ((InstrId(0), InstrId(0)), (0, 0)),
            },
        };
        violations.push(Violation {
            kind: ViolationKind::Deadlock,
            sites,
            var: String::new(),
            threads,
            schedule_seed: seed,
        });
    }

    for leak in &trace.leaked {
        violations.push(Violation {
            kind: ViolationKind::ThreadLeak,
            sites: (leak.fork_site, leak.fork_site),
            var: String::new(),
            threads: (0, leak.thread),
            schedule_seed: seed,
        });
    }

    Ok(violations)
}
