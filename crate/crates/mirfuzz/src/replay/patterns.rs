//! Corpus replay patterns.
//!
//! Pattern one walks the corpus round-robin with one execution per seed per
//! turn. Pattern two gives each seed `max(1, N_c / N_0)` consecutive
//! executions per turn, spending more of the budget on seeds whose
//! calibration saw more interleaving diversity. Both stop exactly at the
//! execution budget and dedup violations into bug reports by root cause.

use super::detect::{detect_violations, BugKey, Violation};
use crate::executor::{Executor, SchedulerConfig};
use crate::fuzzer::CorpusSeed;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayPattern {
    P1,
    P2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub pattern: ReplayPattern,
    pub budget_execs: u64,
    pub master_seed: u64,
    pub scheduler: SchedulerConfig,
    /// Base repetition count; pattern two runs `N_c / n0` per turn.
    pub n0: u32,
}

impl ReplayConfig {
    pub fn new(pattern: ReplayPattern, budget_execs: u64, master_seed: u64) -> ReplayConfig {
        ReplayConfig {
            pattern,
            budget_execs,
            master_seed,
            scheduler: SchedulerConfig::default(),
            n0: crate::fuzzer::FuzzParams::default().n0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugSummary {
    pub key: BugKey,
    pub threads: (u32, u32),
    /// Executions completed when the bug was first observed.
    pub first_exposure_execs: u64,
    pub first_schedule_seed: u64,
    /// Corpus entry that first exposed the bug.
    pub first_seed_name: String,
    pub exposures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub pattern: ReplayPattern,
    pub budget_execs: u64,
    pub execs_done: u64,
    pub corpus_size: usize,
    /// Executions that observed at least one violation.
    pub n_e_m: u64,
    /// Deduplicated bug count.
    pub n_b_m: u64,
    pub bugs: Vec<BugSummary>,
    pub wall_seconds: f64,
}

impl ReplayReport {
    pub fn to_json_normalized(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["wall_seconds"] = serde_json::json!(0.0);
        v
    }

    /// Executions until every key in `keys` was exposed; `None` when some
    /// key never showed up.
    pub fn time_to_expose_all(&self, keys: &[BugKey]) -> Option<u64> {
        keys.iter()
            .map(|k| self.bugs.iter().find(|b| &b.key == k).map(|b| b.first_exposure_execs))
            .try_fold(0u64, |acc, t| t.map(|t| acc.max(t)))
    }
}

/// Replays the corpus under the configured pattern, accumulating violations
/// and deduplicated bugs.
pub fn replay(exec: &Executor, corpus: &[CorpusSeed], config: &ReplayConfig) -> ReplayReport {
    let started = Instant::now();
    let mut rng = SplitMix64::new(config.master_seed);
    let mut execs: u64 = 0;
    let mut n_e_m: u64 = 0;
    let mut bugs: BTreeMap<BugKey, BugSummary> = BTreeMap::new();

    'outer: loop {
        if corpus.is_empty() || config.budget_execs == 0 {
            break;
        }
        let mut progressed = false;
        for seed in corpus {
            let per_turn = match config.pattern {
                ReplayPattern::P1 => 1,
                ReplayPattern::P2 => (seed.repetition_count / config.n0).max(1),
            };
            for _ in 0..per_turn {
                if execs >= config.budget_execs {
                    break 'outer;
                }
                let schedule_seed = rng.next_u64();
                let (_, trace) = exec.run_traced(&seed.bytes, &config.scheduler.with_seed(schedule_seed));
                execs += 1;
                progressed = true;
                let violations: Vec<Violation> =
                    detect_violations(&trace).expect("virtual machine emits well-formed traces");
                if !violations.is_empty() {
                    n_e_m += 1;
                }
                for v in violations {
                    let key = BugKey::of(&v);
                    match bugs.get_mut(&key) {
                        Some(b) => b.exposures += 1,
                        None => {
                            bugs.insert(
                                key.clone(),
                                BugSummary {
                                    key,
                                    threads: v.threads,
                                    first_exposure_execs: execs,
                                    first_schedule_seed: schedule_seed,
                                    first_seed_name: seed.name.clone(),
                                    exposures: 1,
                                },
                            );
                        }
                    }
                }
            }
        }
        if !progressed {
            break;
        }
    }

    let bugs: Vec<BugSummary> = bugs.into_values().collect();
    ReplayReport {
        pattern: config.pattern,
        budget_execs: config.budget_execs,
        execs_done: execs,
        corpus_size: corpus.len(),
        n_e_m,
        n_b_m: bugs.len() as u64,
        bugs,
        wall_seconds: started.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze_program, InstrumentMode, InstrumentParams};
    use crate::mtir::parse_program;
    use crate::replay::ViolationKind;

    const TOY_RACE: &str = include_str!("../../benchmarks/toys/toy_race.mtir");

    fn toy_exec() -> Executor {
        let p = parse_program(TOY_RACE).unwrap();
        let a = analyze_program(&p, InstrumentMode::AflIns, 1, &InstrumentParams::default()).unwrap();
        Executor::new(&p, &a.plan)
    }

    fn corpus(n: usize, reps: u32) -> Vec<CorpusSeed> {
        (0..n)
            .map(|i| CorpusSeed {
                name: format!("id_{i:06}"),
                bytes: vec![i as u8],
                is_mt: true,
                c_m: (reps.saturating_sub(8)) / 8,
                repetition_count: reps,
            })
            .collect()
    }

    #[test]
    fn p1_respects_budget_exactly() {
        let exec = toy_exec();
        let report = replay(&exec, &corpus(3, 8), &ReplayConfig::new(ReplayPattern::P1, 7, 1));
        assert_eq!(report.execs_done, 7);
        assert_eq!(report.budget_execs, 7);
    }

    #[test]
    fn p1_single_seed_runs_whole_budget() {
        let exec = toy_exec();
        let report = replay(&exec, &corpus(1, 8), &ReplayConfig::new(ReplayPattern::P1, 100, 1));
        assert_eq!(report.execs_done, 100);
    }

    #[test]
    fn p2_matches_p1_when_all_base_repetitions() {
        let exec = toy_exec();
        let a = replay(&exec, &corpus(4, 8), &ReplayConfig::new(ReplayPattern::P1, 20, 5));
        let b = replay(&exec, &corpus(4, 8), &ReplayConfig::new(ReplayPattern::P2, 20, 5));
        assert_eq!(a.to_json_normalized()["bugs"], b.to_json_normalized()["bugs"]);
        assert_eq!(a.execs_done, b.execs_done);
    }

    #[test]
    fn p2_runs_high_repetition_seeds_consecutively() {
        let exec = toy_exec();
        let report = replay(&exec, &corpus(1, 40), &ReplayConfig::new(ReplayPattern::P2, 5, 1));
        // One seed with N_c = 40 gets 5 executions per turn.
        assert_eq!(report.execs_done, 5);
    }

    #[test]
    fn races_dedup_into_bugs() {
        let exec = toy_exec();
        let report = replay(&exec, &corpus(2, 8), &ReplayConfig::new(ReplayPattern::P1, 60, 3));
        assert!(report.n_b_m >= 1);
        assert!(report.n_e_m > report.n_b_m, "violations repeat across executions");
        assert!(report.bugs.iter().all(|b| b.key.kind == ViolationKind::DataRace));
        let ttfe = report.time_to_expose_all(&[report.bugs[0].key.clone()]);
        assert_eq!(ttfe, Some(report.bugs[0].first_exposure_execs));
    }

    #[test]
    fn replay_is_deterministic() {
        let exec = toy_exec();
        let cfg = ReplayConfig::new(ReplayPattern::P2, 40, 9);
        let a = replay(&exec, &corpus(3, 24), &cfg);
        let b = replay(&exec, &corpus(3, 24), &cfg);
        assert_eq!(a.to_json_normalized(), b.to_json_normalized());
    }
}
