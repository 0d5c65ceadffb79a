//! Seed selection and repetition-count policy.
//!
//! Selection walks the queue round-robin and decides per front seed. When
//! any queued seed still carries pending novelty, a front seed covering a
//! new thread context is always taken, one covering only a new trace with
//! probability `P_ynt`, anything else with `P_ynn`; with nothing pending
//! anywhere the probability is `P_nnn`. The context-blind mode drops the
//! context branch entirely and never reads signature state.
//!
//! Repetition counts: context-aware modes use
//! `N_c = N_0 + min(N_v, N_0 * C_m)`; the context-blind mode uses the
//! classic `N_c = N_0 + N_v * B_v`.

use super::queue::Seed;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuzzMode {
    /// Stratified instrumentation plus all context-aware dynamic strategies.
    Muzz,
    /// Even instrumentation plus the context-aware dynamic strategies.
    Mafl,
    /// Even instrumentation, no context feedback anywhere.
    Afl,
}

impl FuzzMode {
    pub fn uses_ctx(self) -> bool {
        !matches!(self, FuzzMode::Afl)
    }

    pub fn name(self) -> &'static str {
        match self {
            FuzzMode::Muzz => "muzz",
            FuzzMode::Mafl => "mafl",
            FuzzMode::Afl => "afl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzParams {
    pub p_ynt: f64,
    pub p_ynn: f64,
    pub p_nnn: f64,
    pub n0: u32,
    pub nv: u32,
    /// Performance-score constant for the mutation-chance formula.
    pub k_mutation: f64,
    pub m_min: u32,
    pub m_max: u32,
}

impl Default for FuzzParams {
    fn default() -> Self {
        FuzzParams {
            p_ynt: 0.95,
            p_ynn: 0.01,
            p_nnn: 0.15,
            n0: 8,
            nv: 32,
            k_mutation: 128.0,
            m_min: 16,
            m_max: 1024,
        }
    }
}

/// Decides whether the queue-front seed is fuzzed this round.
/// `ctx_consults` counts reads of context state, for the mode-separation
/// check.
pub fn select_next_seed(
    front: &Seed,
    queue_has_new_mt_ctx: bool,
    queue_has_new_trace: bool,
    mode: FuzzMode,
    params: &FuzzParams,
    rng: &mut SplitMix64,
    ctx_consults: &mut u64,
) -> bool {
    if mode.uses_ctx() {
        *ctx_consults += 1;
        if queue_has_new_mt_ctx || queue_has_new_trace {
            if front.covered_new_mt_ctx {
                true
            } else if front.covered_new_trace {
                rng.chance(params.p_ynt)
            } else {
                rng.chance(params.p_ynn)
            }
        } else {
            rng.chance(params.p_nnn)
        }
    } else if queue_has_new_trace {
        if front.covered_new_trace {
            rng.chance(params.p_ynt)
        } else {
            rng.chance(params.p_ynn)
        }
    } else {
        rng.chance(params.p_nnn)
    }
}

/// Per-mutant execution repetitions derived from the selected seed.
pub fn repetition_count(seed: &Seed, mode: FuzzMode, params: &FuzzParams) -> u32 {
    if mode.uses_ctx() {
        params.n0 + params.nv.min(params.n0 * seed.c_m)
    } else {
        params.n0 + params.nv * seed.b_v as u32
    }
}

/// Mutation chance: favors fast seeds and small inputs, clamped to
/// `[m_min, m_max]`.
pub fn mutation_chance(
    seed: &Seed,
    baseline_steps: f64,
    baseline_len: f64,
    params: &FuzzParams,
) -> u32 {
    let steps = seed.avg_exec_steps.max(1.0);
    let len = (seed.len as f64).max(1.0);
    let score = params.k_mutation * (baseline_steps / steps) * (baseline_len / len);
    (score.round() as i64).clamp(params.m_min as i64, params.m_max as i64) as u32
}
