//! Bundled benchmark programs with planted ground truth, plus the
//! mode-comparison matrix and its aggregation.
//!
//! The five cases scale one skeleton — validate input, fork workers over
//! shared state — toward specific claims: `fig1` is the worked-example
//! program; `gate` stresses seed-queue composition behind a staged validity
//! check; `racecrash` plants an interleaving-conditioned crash plus a
//! schedule-rare data race; `lockinv` plants a lock-order inversion (and the
//! deadlock it implies); `leak` plants a thread-leak.

use crate::analysis::build_icfg;
use crate::executor::Frame;
use crate::fuzzer::{
    run_campaign, CampaignConfig, CampaignReport, CorpusSeed, CrashKey, FuzzMode, FuzzParams,
};
use crate::mtir::{parse_program, InstrId, InstrTable, Program};
use crate::replay::{replay, BugKey, ReplayConfig, ReplayPattern, ReplayReport, ViolationKind};
use serde::{Deserialize, Serialize};

pub type Loc = (&'static str, &'static str, usize);

#[derive(Debug, Clone)]
pub struct PlantedCrash {
    pub tag: &'static str,
    /// Innermost frames of the expected dedup key, outermost first.
    pub frames: Vec<Loc>,
    pub concurrency_dependent: bool,
}

impl PlantedCrash {
    pub fn key(&self) -> CrashKey {
        CrashKey {
            tag: self.tag.to_string(),
            frames: self
                .frames
                .iter()
                .map(|&(function, block, instr)| Frame {
                    function: function.to_string(),
                    block: block.to_string(),
                    instr,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedViolation {
    pub kind: ViolationKind,
    pub sites: (Loc, Loc),
    pub var: &'static str,
}

impl PlantedViolation {
    pub fn key(&self, program: &Program) -> BugKey {
        let table = InstrTable::build(program);
        let resolve = |(f, b, i): Loc| -> InstrId {
            let fi = program.function_index(f).expect("ground-truth function");
            let bi = program.function(f).unwrap().block_index(b).expect("ground-truth block");
            table.id(fi, bi, i)
        };
        let (a, b) = (resolve(self.sites.0), resolve(self.sites.1));
        BugKey {
            kind: self.kind,
            sites: (a.min(b), a.max(b)),
            var: self.var.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    /// Expected suspicious-interleaving-scope members.
    pub scope: Option<Vec<Loc>>,
    /// `(variable, canonical input, reachable final values)`.
    pub final_shared: Option<(&'static str, &'static [u8], Vec<i64>)>,
    pub crashes: Vec<PlantedCrash>,
    pub violations: Vec<PlantedViolation>,
    /// Input that makes the planted bugs reachable.
    pub trigger_input: Option<&'static [u8]>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub name: &'static str,
    pub file_name: &'static str,
    pub source: &'static str,
    pub initial_seeds: Vec<Vec<u8>>,
    pub ground_truth: GroundTruth,
    pub fuzz_budget: u64,
    pub replay_budget: u64,
}

impl BenchmarkCase {
    pub fn program(&self) -> Program {
        parse_program(self.source).expect("bundled benchmark parses")
    }
}

pub const FIG1_SRC: &str = include_str!("../benchmarks/fig1.mtir");
pub const GATE_SRC: &str = include_str!("../benchmarks/gate.mtir");
pub const RACECRASH_SRC: &str = include_str!("../benchmarks/racecrash.mtir");
pub const LOCKINV_SRC: &str = include_str!("../benchmarks/lockinv.mtir");
pub const LEAK_SRC: &str = include_str!("../benchmarks/leak.mtir");

pub fn fig1() -> BenchmarkCase {
    BenchmarkCase {
        name: "fig1",
        file_name: "fig1.mtir",
        source: FIG1_SRC,
        initial_seeds: vec![vec![0, 0, 0, 0], vec![1, 0, 0, 0]],
        ground_truth: GroundTruth {
            scope: Some(vec![
                ("compute", "k0", 1),
                ("compute", "k0", 2),
                ("compute", "k0", 3),
                ("compute", "k_neg", 0),
                ("compute", "k_pos", 3),
                ("modify", "m0", 0),
            ]),
            final_shared: Some(("g_var", &[1], vec![2, 4])),
            crashes: vec![],
            violations: vec![
                PlantedViolation {
                    kind: ViolationKind::DataRace,
                    sites: (("compute", "k0", 1), ("compute", "k0", 2)),
                    var: "g_var",
                },
                PlantedViolation {
                    kind: ViolationKind::DataRace,
                    sites: (("modify", "m0", 0), ("modify", "m0", 0)),
                    var: "s_var",
                },
            ],
            trigger_input: Some(&[1]),
        },
        fuzz_budget: 20_000,
        replay_budget: 1_000,
    }
}

pub fn gate() -> BenchmarkCase {
    BenchmarkCase {
        name: "gate",
        file_name: "gate.mtir",
        source: GATE_SRC,
        initial_seeds: vec![vec![0; 8]],
        ground_truth: GroundTruth { trigger_input: Some(&[1, 42, 77, 0, 0, 0, 0, 0]), ..Default::default() },
        fuzz_budget: 40_000,
        replay_budget: 1_000,
    }
}

pub fn racecrash() -> BenchmarkCase {
    BenchmarkCase {
        name: "racecrash",
        file_name: "racecrash.mtir",
        source: RACECRASH_SRC,
        initial_seeds: vec![vec![0, 0, 0, 0]],
        ground_truth: GroundTruth {
            scope: None,
            final_shared: None,
            crashes: vec![PlantedCrash {
                tag: "planted-mt",
                frames: vec![("main", "b_boom", 0)],
                concurrency_dependent: true,
            }],
            violations: vec![
                // Schedule-rare: worker 1 writes v only inside worker 0's
                // transient flag window (plus an input gate).
                PlantedViolation {
                    kind: ViolationKind::DataRace,
                    sites: (("worker", "w_a", 1), ("worker", "w_deep", 3)),
                    var: "v",
                },
                // Common: the unguarded atomic read-modify-writes on g.
                PlantedViolation {
                    kind: ViolationKind::DataRace,
                    sites: (("worker", "w0", 0), ("worker", "w0", 1)),
                    var: "g",
                },
            ],
            trigger_input: Some(&[b'R', 0, b'q', 1]),
        },
        fuzz_budget: 60_000,
        replay_budget: 3_000,
    }
}

pub fn lockinv() -> BenchmarkCase {
    BenchmarkCase {
        name: "lockinv",
        file_name: "lockinv.mtir",
        source: LOCKINV_SRC,
        initial_seeds: vec![vec![0], vec![1]],
        ground_truth: GroundTruth {
            violations: vec![
                PlantedViolation {
                    kind: ViolationKind::LockOrderInversion,
                    sites: (("left", "l0", 1), ("right", "r0", 1)),
                    var: "m0<->m1",
                },
                PlantedViolation {
                    kind: ViolationKind::Deadlock,
                    sites: (("left", "l0", 1), ("right", "r0", 1)),
                    var: "",
                },
            ],
            trigger_input: Some(&[1]),
            ..Default::default()
        },
        fuzz_budget: 10_000,
        replay_budget: 500,
    }
}

pub fn leak() -> BenchmarkCase {
    BenchmarkCase {
        name: "leak",
        file_name: "leak.mtir",
        source: LEAK_SRC,
        initial_seeds: vec![vec![0], vec![1]],
        ground_truth: GroundTruth {
            violations: vec![PlantedViolation {
                kind: ViolationKind::ThreadLeak,
                sites: (("main", "b_leak", 0), ("main", "b_leak", 0)),
                var: "",
            }],
            trigger_input: Some(&[1]),
            ..Default::default()
        },
        fuzz_budget: 5_000,
        replay_budget: 200,
    }
}

pub fn all_benchmarks() -> Vec<BenchmarkCase> {
    vec![fig1(), gate(), racecrash(), lockinv(), leak()]
}

pub fn benchmark_by_name(name: &str) -> Option<BenchmarkCase> {
    all_benchmarks().into_iter().find(|b| b.name == name)
}

/// Bundled single-purpose programs for the oracle-equivalence checks.
pub fn toy_programs() -> Vec<(&'static str, &'static str)> {
    vec![
        ("toy_race", include_str!("../benchmarks/toys/toy_race.mtir")),
        ("toy_guarded", include_str!("../benchmarks/toys/toy_guarded.mtir")),
        ("toy_window", include_str!("../benchmarks/toys/toy_window.mtir")),
        ("toy_seq", include_str!("../benchmarks/toys/toy_seq.mtir")),
        ("toy_deadlock", include_str!("../benchmarks/toys/toy_deadlock.mtir")),
    ]
}

/// Static count of interleaving points: shared-accessing or thread-API
/// instructions inside functions reachable from the forked set. Programs at
/// or under the small-scale bound are eligible for exhaustive-oracle checks.
pub fn interleaving_points(program: &Program) -> usize {
    let icfg = build_icfg(program);
    let forked: Vec<usize> = icfg.fork_edges.iter().map(|&(_, f)| f).collect();
    let reachable = icfg.reachable_functions(program, &forked);
    let mut count = 0;
    for (fi, f) in program.functions.iter().enumerate() {
        if !reachable[fi] {
            continue;
        }
        for b in &f.blocks {
            for instr in &b.instrs {
                use crate::mtir::Instr;
                let visible = !instr.shared_reads().is_empty()
                    || instr.shared_writes().is_some()
                    || matches!(
                        instr,
                        Instr::LockAcquire { .. }
                            | Instr::LockRelease { .. }
                            | Instr::ThreadFork { .. }
                            | Instr::ThreadJoin
                    );
                if visible {
                    count += 1;
                }
            }
        }
    }
    count
}

// ---------------------------------------------------------------------------
// Mode-comparison matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: FuzzMode,
    pub run: u32,
    pub master_seed: u64,
    pub n_all: u64,
    pub n_mt: u64,
    pub mt_ratio: f64,
    pub n_c_m: u64,
    pub n_b_m: u64,
}

impl BenchRow {
    pub fn from_reports(
        mode: FuzzMode,
        run: u32,
        master_seed: u64,
        campaign: &CampaignReport,
        replay: Option<&ReplayReport>,
    ) -> BenchRow {
        BenchRow {
            mode,
            run,
            master_seed,
            n_all: campaign.n_all,
            n_mt: campaign.n_mt,
            mt_ratio: campaign.mt_ratio,
            n_c_m: campaign.n_c_m,
            n_b_m: replay.map_or(0, |r| r.n_b_m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub mode: FuzzMode,
    pub n_mt: f64,
    pub mt_ratio: f64,
    pub n_c_m: f64,
    pub n_b_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub benchmark: String,
    pub rows: Vec<BenchRow>,
    pub medians: Vec<MedianRow>,
    pub checks: Vec<CheckRow>,
}

pub fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Pure aggregation of raw rows into medians plus ordering checks.
pub fn aggregate(benchmark: &str, rows: Vec<BenchRow>) -> BenchTable {
    let mut medians = Vec::new();
    for mode in [FuzzMode::Muzz, FuzzMode::Mafl, FuzzMode::Afl] {
        let of = |f: &dyn Fn(&BenchRow) -> f64| -> f64 {
            let mut vals: Vec<f64> =
                rows.iter().filter(|r| r.mode == mode).map(f).collect();
            median(&mut vals)
        };
        if rows.iter().any(|r| r.mode == mode) {
            medians.push(MedianRow {
                mode,
                n_mt: of(&|r| r.n_mt as f64),
                mt_ratio: of(&|r| r.mt_ratio),
                n_c_m: of(&|r| r.n_c_m as f64),
                n_b_m: of(&|r| r.n_b_m as f64),
            });
        }
    }
    let mut checks = Vec::new();
    let ratio_of = |mode: FuzzMode| medians.iter().find(|m| m.mode == mode).map(|m| m.mt_ratio);
    if let (Some(muzz), Some(mafl), Some(afl)) =
        (ratio_of(FuzzMode::Muzz), ratio_of(FuzzMode::Mafl), ratio_of(FuzzMode::Afl))
    {
        checks.push(CheckRow {
            name: "mt_ratio_ordering".into(),
            pass: muzz >= mafl && mafl >= afl,
            detail: format!("muzz={muzz:.3} mafl={mafl:.3} afl={afl:.3}"),
        });
        checks.push(CheckRow {
            name: "mt_ratio_gap_5pp".into(),
            pass: muzz - afl >= 0.05,
            detail: format!("muzz-afl={:.3}", muzz - afl),
        });
    }
    BenchTable { benchmark: benchmark.to_string(), rows, medians, checks }
}

pub struct BenchMatrixConfig {
    pub modes: Vec<FuzzMode>,
    pub runs: u32,
    pub fuzz_budget: u64,
    pub replay_budget: u64,
    pub master_seed: u64,
    pub params: FuzzParams,
}

/// One campaign plus a pattern-two replay of its multithreaded queue seeds.
pub fn run_one_cell(
    case: &BenchmarkCase,
    mode: FuzzMode,
    master_seed: u64,
    fuzz_budget: u64,
    replay_budget: u64,
    params: &FuzzParams,
) -> (CampaignReport, ReplayReport) {
    let program = case.program();
    let mut config = CampaignConfig::new(mode, master_seed, fuzz_budget);
    config.params = *params;
    let outcome = run_campaign(&program, case.file_name, &config, &case.initial_seeds)
        .expect("bundled benchmark analyzes");
    let corpus: Vec<CorpusSeed> = outcome
        .queue
        .iter()
        .filter(|s| s.is_mt)
        .map(|s| CorpusSeed {
            name: format!("id_{:06}", s.id),
            bytes: s.bytes.clone(),
            is_mt: s.is_mt,
            c_m: s.c_m,
            repetition_count: crate::fuzzer::repetition_count(s, mode, params),
        })
        .collect();
    let replay_exec = {
        let a = crate::analysis::analyze_program(
            &program,
            crate::analysis::InstrumentMode::AflIns,
            1,
            &crate::analysis::InstrumentParams::default(),
        )
        .expect("bundled benchmark analyzes");
        crate::executor::Executor::new(&program, &a.plan)
    };
    let replay_cfg = ReplayConfig::new(ReplayPattern::P2, replay_budget, master_seed ^ 0x5eed);
    let replay_report = replay(&replay_exec, &corpus, &replay_cfg);
    (outcome.report, replay_report)
}

/// Runs the full mode matrix over one benchmark.
pub fn run_bench_matrix(case: &BenchmarkCase, cfg: &BenchMatrixConfig) -> BenchTable {
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        for run in 0..cfg.runs {
            let master_seed = cfg.master_seed.wrapping_add(run as u64);
            let (campaign, replay_report) =
                run_one_cell(case, mode, master_seed, cfg.fuzz_budget, cfg.replay_budget, &cfg.params);
            rows.push(BenchRow::from_reports(mode, run, master_seed, &campaign, Some(&replay_report)));
        }
    }
    aggregate(case.name, rows)
}

pub fn render_bench_table(table: &BenchTable) -> String {
    let mut out = String::new();
    out.push_str(&format!("benchmark: {}\n", table.benchmark));
    out.push_str("mode  run  seed        n_all    n_mt  mt_ratio  n_c_m  n_b_m\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{:<5} {:<4} {:<10} {:>6} {:>7} {:>9.3} {:>6} {:>6}\n",
            r.mode.name(),
            r.run,
            r.master_seed,
            r.n_all,
            r.n_mt,
            r.mt_ratio,
            r.n_c_m,
            r.n_b_m
        ));
    }
    out.push_str("medians:\n");
    for m in &table.medians {
        out.push_str(&format!(
            "{:<5} n_mt={:<8.1} mt_ratio={:<7.3} n_c_m={:<5.1} n_b_m={:<5.1}\n",
            m.mode.name(),
            m.n_mt,
            m.mt_ratio,
            m.n_c_m,
            m.n_b_m
        ));
    }
    for c in &table.checks {
        out.push_str(&format!(
            "check {}: {} ({})\n",
            c.name,
            if c.pass { "pass" } else { "fail" },
            c.detail
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_benchmarks_parse_and_validate() {
        for case in all_benchmarks() {
            let p = case.program();
            assert!(!p.functions.is_empty(), "{}", case.name);
        }
        for (name, src) in toy_programs() {
            assert!(parse_program(src).is_ok(), "{name}");
        }
    }

    #[test]
    fn ground_truth_locations_resolve() {
        for case in all_benchmarks() {
            let p = case.program();
            for v in &case.ground_truth.violations {
                let _ = v.key(&p);
            }
        }
    }

    #[test]
    fn interleaving_point_counts() {
        let fig1_points = interleaving_points(&fig1().program());
        assert_eq!(fig1_points, 7);
        let lockinv_points = interleaving_points(&lockinv().program());
        assert_eq!(lockinv_points, 8);
        let leak_points = interleaving_points(&leak().program());
        assert_eq!(leak_points, 1);
        let seq = parse_program(toy_programs()[3].1).unwrap();
        assert_eq!(interleaving_points(&seq), 0);
    }

    #[test]
    fn median_definition() {
        assert_eq!(median(&mut vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut vec![]), 0.0);
    }

    #[test]
    fn aggregate_shapes_and_checks() {
        let row = |mode, ratio: f64| BenchRow {
            mode,
            run: 0,
            master_seed: 0,
            n_all: 10,
            n_mt: (ratio * 10.0) as u64,
            mt_ratio: ratio,
            n_c_m: 0,
            n_b_m: 0,
        };
        let rows: Vec<BenchRow> = vec![
            row(FuzzMode::Muzz, 0.8),
            row(FuzzMode::Mafl, 0.6),
            row(FuzzMode::Afl, 0.5),
        ];
        let table = aggregate("gate", rows);
        assert_eq!(table.medians.len(), 3);
        assert_eq!(table.checks.len(), 2);
        assert!(table.checks[0].pass);
        assert!(table.checks[1].pass);
        let text = render_bench_table(&table);
        assert!(text.contains("check mt_ratio_ordering: pass"));
    }
}
