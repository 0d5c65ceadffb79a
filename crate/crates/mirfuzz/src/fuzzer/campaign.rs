//! The fuzzing campaign loop.
//!
//! One iteration: take the queue-front seed, decide whether to fuzz it,
//! derive its mutation count from the performance score and its repetition
//! count from its calibration stats, then for each mutant run the repeated
//! executions under fresh schedule seeds, triaging crashes and admitting the
//! mutant when any run contributed new coverage or a new thread context.
//!
//! With `parallel_workers = 1` the campaign is a pure function of
//! `(program, config, initial seeds)`: every random draw comes from the
//! master-seeded generator in a fixed order. The optional parallel mode
//! shards each round's mutants across workers with pre-drawn schedule seeds
//! and merges in mutant order; it stays deterministic for a fixed worker
//! count but diverges from the sequential schedule (mutants no longer splice
//! against seeds admitted earlier in the same round), so it is excluded from
//! the acceptance properties.
//!
//! Per-execution policy: crashes are triaged and never queued; step-budget
//! hangs contribute nothing; normal exits and deadlocks feed coverage and
//! context novelty.

use super::mutate::mutate;
use super::queue::{GlobalState, Seed};
use super::select::{mutation_chance, repetition_count, select_next_seed, FuzzMode, FuzzParams};
use super::triage::{CrashCorpus, CrashKey, CrashRecord};
use crate::analysis::{analyze_program, InstrumentMode, InstrumentParams, ScopeError};
use crate::executor::{ExecutionResult, Executor, ExitStatus, SchedulerConfig};
use crate::mtir::Program;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: FuzzMode,
    pub master_seed: u64,
    /// Total execution budget; every VM run counts, calibration included.
    pub budget_execs: u64,
    pub params: FuzzParams,
    pub instrument: InstrumentParams,
    /// Template for per-run scheduling; the seed field is overwritten per
    /// execution.
    pub scheduler: SchedulerConfig,
    pub parallel_workers: usize,
    /// First queue id to assign (nonzero when resuming a corpus).
    pub first_seed_id: u64,
}

impl CampaignConfig {
    pub fn new(mode: FuzzMode, master_seed: u64, budget_execs: u64) -> CampaignConfig {
        CampaignConfig {
            mode,
            master_seed,
            budget_execs,
            params: FuzzParams::default(),
            instrument: InstrumentParams::default(),
            scheduler: SchedulerConfig::default(),
            parallel_workers: 1,
            first_seed_id: 0,
        }
    }

    pub fn instrument_mode(&self) -> InstrumentMode {
        match self.mode {
            FuzzMode::Muzz => InstrumentMode::MuzzIns,
            FuzzMode::Mafl | FuzzMode::Afl => InstrumentMode::AflIns,
        }
    }
}

/// Queue-manifest entry: seed metadata without the bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMeta {
    pub id: u64,
    pub parent: Option<u64>,
    pub len: usize,
    pub is_mt: bool,
    pub c_m: u32,
    pub b_v: bool,
    pub avg_exec_steps: f64,
    pub discovered_at: u64,
    pub covered_new_trace: bool,
    pub covered_new_mt_ctx: bool,
    /// Repetitions a mutant of this seed gets; replay pattern two uses it.
    pub repetition_count: u32,
}

impl SeedMeta {
    pub fn from_seed(seed: &Seed, mode: FuzzMode, params: &FuzzParams) -> SeedMeta {
        SeedMeta {
            id: seed.id,
            parent: seed.parent,
            len: seed.len,
            is_mt: seed.is_mt,
            c_m: seed.c_m,
            b_v: seed.b_v,
            avg_exec_steps: seed.avg_exec_steps,
            discovered_at: seed.discovered_at,
            covered_new_trace: seed.covered_new_trace,
            covered_new_mt_ctx: seed.covered_new_mt_ctx,
            repetition_count: repetition_count(seed, mode, params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashSummary {
    pub digest: String,
    pub key: CrashKey,
    pub is_mt: bool,
    pub discovered_at: u64,
    pub exposures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub program: String,
    pub config: CampaignConfig,
    pub n_all: u64,
    pub n_mt: u64,
    pub mt_ratio: f64,
    /// Deduplicated proof-of-crash count, split by multithreading relevance.
    pub n_c: u64,
    pub n_c_m: u64,
    pub n_c_s: u64,
    pub vulns_mt: Vec<CrashSummary>,
    pub vulns_st: Vec<CrashSummary>,
    pub execs_done: u64,
    pub wall_seconds: f64,
    pub queue: Vec<SeedMeta>,
}

impl CampaignReport {
    /// JSON form with the wall-clock field zeroed, for byte-comparing
    /// deterministic campaigns.
    pub fn to_json_normalized(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["wall_seconds"] = serde_json::json!(0.0);
        v
    }
}

pub struct CampaignOutcome {
    pub report: CampaignReport,
    pub queue: Vec<Seed>,
    pub crashes: Vec<CrashRecord>,
    pub ctx_consults: u64,
}

struct CalibStats {
    crashed: bool,
    new_trace: bool,
    new_ctx: bool,
    is_mt: bool,
    c_m: u32,
    b_v: bool,
    avg_steps: f64,
}

struct Campaign {
    exec: Executor,
    mode: FuzzMode,
    params: FuzzParams,
    scheduler: SchedulerConfig,
    budget: u64,
    rng: SplitMix64,
    global: GlobalState,
    crashes: CrashCorpus,
    queue: Vec<Seed>,
    /// Queue bytes, index-aligned with `queue`; splice donor pool.
    pool: Vec<Vec<u8>>,
    execs: u64,
    next_id: u64,
    pending_trace: usize,
    pending_ctx: usize,
    sum_steps: f64,
    sum_len: f64,
}

impl Campaign {
    fn run_one(&mut self, bytes: &[u8]) -> ExecutionResult {
        let seed = self.rng.next_u64();
        self.execs += 1;
        self.exec.run(bytes, &self.scheduler.with_seed(seed))
    }

    /// Triages/absorbs one run's outcome into the campaign state.
    fn absorb(&mut self, r: &ExecutionResult, bytes: &[u8], stats: &mut CalibStats) {
        stats.is_mt |= r.is_mt;
        match &r.exit {
            ExitStatus::Crash { .. } => {
                stats.crashed = true;
                self.crashes.triage(&r.exit, bytes, r.is_mt, self.execs);
            }
            ExitStatus::StepBudgetExhausted => {}
            ExitStatus::Exit(_) | ExitStatus::Deadlock => {
                stats.new_trace |= self.global.cov_new_trace(r);
                if self.mode.uses_ctx() {
                    stats.new_ctx |= self.global.cov_new_mt_ctx(r);
                }
            }
        }
    }

    fn assess(&mut self, bytes: &[u8], results: &[ExecutionResult]) -> CalibStats {
        let mut stats = CalibStats {
            crashed: false,
            new_trace: false,
            new_ctx: false,
            is_mt: false,
            c_m: 0,
            b_v: false,
            avg_steps: 0.0,
        };
        let mut sigs = std::collections::BTreeSet::new();
        let mut first_ok: Option<&ExecutionResult> = None;
        let mut steps_sum = 0u64;
        for r in results {
            self.absorb(r, bytes, &mut stats);
            steps_sum += r.steps;
            if self.mode.uses_ctx() && r.is_mt && !r.exit.is_crash() {
                sigs.insert(r.s_ctx);
            }
            if !matches!(r.exit, ExitStatus::StepBudgetExhausted) {
                match first_ok {
                    None => first_ok = Some(r),
                    Some(f) => {
                        if f.coverage != r.coverage
                            || std::mem::discriminant(&f.exit) != std::mem::discriminant(&r.exit)
                        {
                            stats.b_v = true;
                        }
                    }
                }
            }
        }
        stats.c_m = sigs.len() as u32;
        stats.avg_steps = if results.is_empty() {
            1.0
        } else {
            steps_sum as f64 / results.len() as f64
        };
        stats
    }

    fn calibrate(&mut self, bytes: &[u8], runs: u32) -> CalibStats {
        let mut results = Vec::with_capacity(runs as usize);
        while (results.len() as u32) < runs && self.execs < self.budget {
            let r = self.run_one(bytes);
            results.push(r);
        }
        self.assess(bytes, &results)
    }

    fn admit(&mut self, bytes: Vec<u8>, parent: Option<u64>, stats: &CalibStats) {
        let seed = Seed {
            id: self.next_id,
            parent,
            len: bytes.len(),
            is_mt: stats.is_mt,
            c_m: stats.c_m,
            b_v: stats.b_v,
            avg_exec_steps: stats.avg_steps,
            discovered_at: self.execs,
            covered_new_trace: stats.new_trace,
            covered_new_mt_ctx: stats.new_ctx,
            bytes: bytes.clone(),
        };
        self.next_id += 1;
        self.global.n_all += 1;
        if seed.is_mt {
            self.global.n_mt += 1;
        }
        self.pending_trace += seed.covered_new_trace as usize;
        self.pending_ctx += seed.covered_new_mt_ctx as usize;
        self.sum_steps += seed.avg_exec_steps;
        self.sum_len += seed.len as f64;
        self.queue.push(seed);
        self.pool.push(bytes);
    }

    fn clear_pending(&mut self, idx: usize) {
        let s = &mut self.queue[idx];
        self.pending_trace -= s.covered_new_trace as usize;
        self.pending_ctx -= s.covered_new_mt_ctx as usize;
        s.covered_new_trace = false;
        s.covered_new_mt_ctx = false;
    }

    /// Sequential mutation round for the selected seed.
    fn mutation_round(&mut self, front: usize, m: u32, nc: u32) {
        for _ in 0..m {
            if self.execs >= self.budget {
                return;
            }
            let mutant = mutate(&self.pool[front], &mut self.rng, &self.pool);
            let stats = self.calibrate(&mutant, nc);
            if !stats.crashed && (stats.new_trace || stats.new_ctx) {
                let parent = Some(self.queue[front].id);
                self.admit(mutant, parent, &stats);
            }
        }
    }

    /// Parallel mutation round: mutants and schedule seeds are drawn up
    /// front, executions fan out over scoped threads, results merge in
    /// mutant order.
    fn mutation_round_parallel(&mut self, front: usize, m: u32, nc: u32, workers: usize) {
        let mut batch: Vec<(Vec<u8>, Vec<u64>)> = Vec::new();
        for _ in 0..m {
            if self.execs >= self.budget {
                break;
            }
            let mutant = mutate(&self.pool[front], &mut self.rng, &self.pool);
            let runs = nc.min((self.budget - self.execs) as u32);
            let seeds: Vec<u64> = (0..runs).map(|_| self.rng.next_u64()).collect();
            self.execs += runs as u64;
            batch.push((mutant, seeds));
        }
        let exec = &self.exec;
        let scheduler = &self.scheduler;
        let mut all_results: Vec<Vec<ExecutionResult>> = Vec::with_capacity(batch.len());
        all_results.resize_with(batch.len(), Vec::new);
        let results_slots: Vec<std::sync::Mutex<Vec<ExecutionResult>>> =
            all_results.into_iter().map(std::sync::Mutex::new).collect();
        std::thread::scope(|scope| {
            for w in 0..workers {
                let batch = &batch;
                let slots = &results_slots;
                scope.spawn(move || {
                    let mut k = w;
                    while k < batch.len() {
                        let (bytes, seeds) = &batch[k];
                        let results: Vec<ExecutionResult> = seeds
                            .iter()
                            .map(|&s| exec.run(bytes, &scheduler.with_seed(s)))
                            .collect();
                        *slots[k].lock().unwrap() = results;
                        k += workers;
                    }
                });
            }
        });
        for (slot, (mutant, _)) in results_slots.into_iter().zip(batch) {
            let results = slot.into_inner().unwrap();
            let stats = self.assess(&mutant, &results);
            if !stats.crashed && (stats.new_trace || stats.new_ctx) {
                let parent = Some(self.queue[front].id);
                self.admit(mutant, parent, &stats);
            }
        }
    }
}

/// Runs a whole campaign against `program`. `label` is echoed into the
/// report (typically the program file name). Initial seeds are queued
/// unconditionally after calibration.
pub fn run_campaign(
    program: &Program,
    label: &str,
    config: &CampaignConfig,
    initial_seeds: &[Vec<u8>],
) -> Result<CampaignOutcome, ScopeError> {
    let started = Instant::now();
    let mut master = SplitMix64::new(config.master_seed);
    let plan_seed = master.next_u64();
    let analysis = analyze_program(program, config.instrument_mode(), plan_seed, &config.instrument)?;
    let mut c = Campaign {
        exec: Executor::new(program, &analysis.plan),
        mode: config.mode,
        params: config.params,
        scheduler: config.scheduler.clone(),
        budget: config.budget_execs,
        rng: master,
        global: GlobalState::new(),
        crashes: CrashCorpus::new(),
        queue: Vec::new(),
        pool: Vec::new(),
        execs: 0,
        next_id: config.first_seed_id,
        pending_trace: 0,
        pending_ctx: 0,
        sum_steps: 0.0,
        sum_len: 0.0,
    };

    for bytes in initial_seeds {
        let stats = c.calibrate(bytes, config.params.n0);
        c.admit(bytes.clone(), None, &stats);
    }

    let mut front = 0usize;
    while c.execs < c.budget && !c.queue.is_empty() {
        let selected = select_next_seed(
            &c.queue[front],
            c.pending_ctx > 0,
            c.pending_trace > 0,
            c.mode,
            &c.params,
            &mut c.rng,
            &mut c.global.ctx_consults,
        );
        if selected {
            let baseline_steps = c.sum_steps / c.queue.len() as f64;
            let baseline_len = c.sum_len / c.queue.len() as f64;
            let m = mutation_chance(&c.queue[front], baseline_steps, baseline_len, &c.params);
            let nc = repetition_count(&c.queue[front], c.mode, &c.params);
            if config.parallel_workers > 1 {
                c.mutation_round_parallel(front, m, nc, config.parallel_workers);
            } else {
                c.mutation_round(front, m, nc);
            }
            c.clear_pending(front);
        }
        front = (front + 1) % c.queue.len();
    }

    let queue_meta: Vec<SeedMeta> =
        c.queue.iter().map(|s| SeedMeta::from_seed(s, config.mode, &config.params)).collect();
    let mut vulns_mt = Vec::new();
    let mut vulns_st = Vec::new();
    for rec in c.crashes.records() {
        let summary = CrashSummary {
            digest: rec.key.digest(),
            key: rec.key.clone(),
            is_mt: rec.is_mt,
            discovered_at: rec.discovered_at,
            exposures: rec.exposures,
        };
        if rec.is_mt {
            vulns_mt.push(summary);
        } else {
            vulns_st.push(summary);
        }
    }
    let n_c_m = vulns_mt.len() as u64;
    let n_c_s = vulns_st.len() as u64;
    let report = CampaignReport {
        program: label.to_string(),
        config: config.clone(),
        n_all: c.global.n_all,
        n_mt: c.global.n_mt,
        mt_ratio: if c.global.n_all == 0 {
            0.0
        } else {
            c.global.n_mt as f64 / c.global.n_all as f64
        },
        n_c: n_c_m + n_c_s,
        n_c_m,
        n_c_s,
        vulns_mt,
        vulns_st,
        execs_done: c.execs,
        wall_seconds: started.elapsed().as_secs_f64(),
        queue: queue_meta,
    };
    Ok(CampaignOutcome {
        report,
        queue: c.queue,
        crashes: c.crashes.records().cloned().collect(),
        ctx_consults: c.global.ctx_consults,
    })
}
