//! Seed queue bookkeeping and novelty feedback.
//!
//! Coverage novelty uses the classic power-of-two hit-count bucketing: a
//! result is new when some map slot shows a bucket the virgin map has not
//! seen. Context novelty is set membership over context signatures. Both
//! checks absorb what they see, so re-observations report false.

use crate::executor::{ContextSignature, ExecutionResult, COVERAGE_MAP_SIZE};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Bucket bit for a hit count: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+.
#[inline]
pub fn bucket_bit(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 1 << 0,
        2 => 1 << 1,
        3 => 1 << 2,
        4..=7 => 1 << 3,
        8..=15 => 1 << 4,
        16..=31 => 1 << 5,
        32..=127 => 1 << 6,
        _ => 1 << 7,
    }
}

/// One queued seed with its fuzzing metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: u64,
    pub parent: Option<u64>,
    #[serde(skip)]
    pub bytes: Vec<u8>,
    pub len: usize,
    pub is_mt: bool,
    /// Distinct context signatures observed across this seed's calibration
    /// runs. Zero for seeds that never exercised multithreading and in the
    /// context-blind mode.
    pub c_m: u32,
    /// Coverage varied across calibration runs (the context-blind
    /// non-determinism bonus flag).
    pub b_v: bool,
    pub avg_exec_steps: f64,
    /// Campaign execution clock at admission.
    pub discovered_at: u64,
    /// Pending-novelty flags, cleared after the seed's first full mutation
    /// round.
    pub covered_new_trace: bool,
    pub covered_new_mt_ctx: bool,
}

/// Campaign-wide feedback state: the virgin coverage map (bucketed), the
/// seen-signature set, and the queue counters.
pub struct GlobalState {
    virgin: Box<[u8; COVERAGE_MAP_SIZE]>,
    seen_ctx: HashSet<ContextSignature>,
    pub n_all: u64,
    pub n_mt: u64,
    /// Times the context branch of seed selection was consulted; stays zero
    /// in the context-blind mode.
    pub ctx_consults: u64,
}

impl GlobalState {
    pub fn new() -> GlobalState {
        let virgin: Box<[u8; COVERAGE_MAP_SIZE]> =
            vec![0u8; COVERAGE_MAP_SIZE].into_boxed_slice().try_into().unwrap();
        GlobalState { virgin, seen_ctx: HashSet::new(), n_all: 0, n_mt: 0, ctx_consults: 0 }
    }

    /// True when the result covers a transition bucket the virgin map has
    /// not seen; absorbs the result's buckets.
    pub fn cov_new_trace(&mut self, result: &ExecutionResult) -> bool {
        let mut new = false;
        let map = result.coverage.as_slice();
        for (slot, &count) in map.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let bit = bucket_bit(count);
            if self.virgin[slot] & bit == 0 {
                self.virgin[slot] |= bit;
                new = true;
            }
        }
        new
    }

    /// True when a multithreaded result carries an unseen context signature;
    /// absorbs it. Single-threaded results never qualify.
    pub fn cov_new_mt_ctx(&mut self, result: &ExecutionResult) -> bool {
        if !result.is_mt {
            return false;
        }
        self.seen_ctx.insert(result.s_ctx)
    }

    pub fn seen_ctx_count(&self) -> usize {
        self.seen_ctx.len()
    }
}

impl Default for GlobalState {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{CoverageMap, ExitStatus};

    fn result_with_hits(hits: &[(u16, u16, u8)], is_mt: bool, sig: u64) -> ExecutionResult {
        let mut coverage = CoverageMap::new();
        for &(prev, label, times) in hits {
            for _ in 0..times {
                coverage.hit(prev, label);
            }
        }
        ExecutionResult {
            exit: ExitStatus::Exit(0),
            coverage,
            s_ctx: ContextSignature { lock: sig, unlock: sig, join: sig },
            is_mt,
            steps: 10,
            threads_forked: if is_mt { 1 } else { 0 },
        }
    }

    #[test]
    fn bucket_boundaries() {
        // Explicit count table pinning the bucket thresholds.
        let table: &[(u8, u8)] = &[
            (0, 0),
            (1, 0b0000_0001),
            (2, 0b0000_0010),
            (3, 0b0000_0100),
            (4, 0b0000_1000),
            (7, 0b0000_1000),
            (8, 0b0001_0000),
            (15, 0b0001_0000),
            (16, 0b0010_0000),
            (31, 0b0010_0000),
            (32, 0b0100_0000),
            (127, 0b0100_0000),
            (128, 0b1000_0000),
            (255, 0b1000_0000),
        ];
        for &(count, bit) in table {
            assert_eq!(bucket_bit(count), bit, "count {count}");
        }
    }

    #[test]
    fn first_execution_is_new() {
        let mut g = GlobalState::new();
        let r = result_with_hits(&[(0, 10, 1)], false, 0);
        assert!(g.cov_new_trace(&r));
        assert!(!g.cov_new_trace(&r));
    }

    #[test]
    fn bucket_transition_is_new() {
        let mut g = GlobalState::new();
        let once = result_with_hits(&[(0, 10, 1)], false, 0);
        assert!(g.cov_new_trace(&once));
        // Same slot hit five times lands in the 4-7 bucket: new again.
        let five = result_with_hits(&[(0, 10, 5)], false, 0);
        assert!(g.cov_new_trace(&five));
        assert!(!g.cov_new_trace(&five));
    }

    #[test]
    fn ctx_novelty_requires_mt() {
        let mut g = GlobalState::new();
        let st = result_with_hits(&[], false, 42);
        assert!(!g.cov_new_mt_ctx(&st));
        let mt = result_with_hits(&[], true, 42);
        assert!(g.cov_new_mt_ctx(&mt));
        assert!(!g.cov_new_mt_ctx(&mt));
    }
}
