//! Command-line front end: `analyze`, `fuzz`, `replay`, `bench`, `report`.
//!
//! Exit codes: 0 success, 1 runtime/analysis error, 2 usage error. The
//! global flags `--master-seed`, `--out`, and `--json` can also come from
//! the environment as `MIRFUZZ_MASTER_SEED`, `MIRFUZZ_OUT`, `MIRFUZZ_JSON`.

use crate::analysis::{analyze_program, InstrumentMode, InstrumentParams};
use crate::bench::{
    aggregate, all_benchmarks, benchmark_by_name, render_bench_table, BenchMatrixConfig, BenchRow,
    BenchTable,
};
use crate::executor::{render_trace, Executor, SchedulerConfig};
use crate::fuzzer::{
    load_corpus, load_seed_dir, max_existing_id, persist_campaign, run_campaign, CampaignConfig,
    CampaignReport, CorpusSeed, FuzzMode, FuzzParams,
};
use crate::mtir::parse_program;
use crate::replay::{replay, ReplayConfig, ReplayPattern, ReplayReport};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "mirfuzz", version, about = "Thread-aware grey-box fuzzer for mini-IR programs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed for every random decision of the invoked command.
    #[arg(long, global = true, env = "MIRFUZZ_MASTER_SEED", default_value_t = 0)]
    master_seed: u64,
    /// Output directory or file, depending on the subcommand.
    #[arg(long, global = true, env = "MIRFUZZ_OUT")]
    out: Option<PathBuf>,
    /// Emit JSON on stdout where a human-readable form is the default.
    #[arg(long, global = true, env = "MIRFUZZ_JSON", default_value_t = false)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Muzz,
    Mafl,
    Afl,
}

impl From<ModeArg> for FuzzMode {
    fn from(m: ModeArg) -> FuzzMode {
        match m {
            ModeArg::Muzz => FuzzMode::Muzz,
            ModeArg::Mafl => FuzzMode::Mafl,
            ModeArg::Afl => FuzzMode::Afl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InsArg {
    Muzz,
    Afl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PatternArg {
    P1,
    P2,
}

#[derive(Debug, Args)]
struct SchedArgs {
    /// Per-execution instruction budget.
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: u64,
    /// Disable per-thread priority randomization.
    #[arg(long, default_value_t = false)]
    no_intervention: bool,
}

impl SchedArgs {
    fn to_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            schedule_rng_seed: 0,
            max_steps: self.max_steps,
            num_thread_slots: 16,
            intervention_enabled: !self.no_intervention,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Static analysis audit: probabilities, scope, deputies, as JSON.
    Analyze {
        #[arg(long)]
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = InsArg::Muzz)]
        mode: InsArg,
        #[arg(long, default_value_t = 0.5)]
        p_s0: f64,
        #[arg(long, default_value_t = 0.33)]
        p_m0: f64,
    },
    /// Run a fuzzing campaign and persist the corpus.
    Fuzz {
        #[arg(long)]
        program: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Directory of initial seed files.
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        budget_execs: u64,
        /// Parallel mutant workers (>1 departs from the sequential schedule).
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        sched: SchedArgs,
    },
    /// Replay a corpus under the concurrency detectors.
    Replay {
        #[arg(long)]
        program: PathBuf,
        /// Campaign output directory or its queue/ subdirectory.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = PatternArg::P1)]
        pattern: PatternArg,
        #[arg(long)]
        budget_execs: u64,
        /// Also replay seeds that never exercised multithreading.
        #[arg(long, default_value_t = false)]
        all_seeds: bool,
        /// Write the trace of each bug's first exposure here.
        #[arg(long)]
        dump_trace_dir: Option<PathBuf>,
        #[command(flatten)]
        sched: SchedArgs,
    },
    /// Compare modes over a bundled benchmark.
    Bench {
        /// Benchmark name (fig1, gate, racecrash, lockinv, leak).
        #[arg(long, default_value = "gate")]
        bench: String,
        #[arg(long, default_value_t = 5)]
        runs: u32,
        #[arg(long)]
        budget_execs: Option<u64>,
        #[arg(long)]
        replay_budget: Option<u64>,
    },
    /// Re-aggregate bench rows from raw campaign/replay artifacts.
    Report {
        /// Directory containing `<mode>_run<N>/campaign.json` artifacts.
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

fn load_program(path: &Path) -> Result<crate::mtir::Program, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_program(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)
                        .map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
                }
            }
            fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Entry point used by `main`; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { ref program, mode, p_s0, p_m0 } => {
            let prog = load_program(program)?;
            let ins = match mode {
                InsArg::Muzz => InstrumentMode::MuzzIns,
                InsArg::Afl => InstrumentMode::AflIns,
            };
            let params = InstrumentParams { p_s0, p_m0 };
            let analysis = analyze_program(&prog, ins, cli.master_seed, &params)
                .map_err(|e| runtime(e.to_string()))?;
            let report = analysis.report(&prog);
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            write_or_print(&cli.out, &text)
        }
        Command::Fuzz { ref program, mode, ref seeds, budget_execs, workers, ref sched } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::Usage("fuzz requires --out".into()))?;
            if workers == 0 {
                return Err(CliError::Usage("--workers must be at least 1".into()));
            }
            let prog = load_program(program)?;
            let mut initial: Vec<Vec<u8>> = load_seed_dir(seeds)
                .map_err(|e| runtime(format!("cannot read seeds {}: {e}", seeds.display())))?
                .into_iter()
                .map(|(_, bytes)| bytes)
                .collect();
            if initial.is_empty() {
                return Err(CliError::Usage(format!(
                    "no seed files in {}",
                    seeds.display()
                )));
            }
            let mut config = CampaignConfig::new(mode.into(), cli.master_seed, budget_execs);
            config.scheduler = sched.to_config();
            config.parallel_workers = workers;
            // Resuming: existing queue entries become initial seeds and ids
            // continue after the highest one present.
            let queue_dir = out.join("queue");
            if let Some(max) = max_existing_id(&queue_dir)
                .map_err(|e| runtime(format!("cannot scan {}: {e}", queue_dir.display())))?
            {
                config.first_seed_id = max + 1;
                let existing = load_corpus(&queue_dir, &config.params)
                    .map_err(|e| runtime(format!("cannot load corpus: {e}")))?;
                initial.extend(existing.into_iter().map(|s| s.bytes));
            }
            let label = program.file_name().map_or_else(
                || program.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            let outcome = run_campaign(&prog, &label, &config, &initial)
                .map_err(|e| runtime(e.to_string()))?;
            persist_campaign(&outcome, &out)
                .map_err(|e| runtime(format!("cannot persist corpus: {e}")))?;
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&outcome.report).expect("report serializes")
                );
            } else {
                let r = &outcome.report;
                println!(
                    "done: execs={} n_all={} n_mt={} mt_ratio={:.3} n_c={} n_c_m={}",
                    r.execs_done, r.n_all, r.n_mt, r.mt_ratio, r.n_c, r.n_c_m
                );
            }
            Ok(())
        }
        Command::Replay {
            ref program,
            ref corpus,
            pattern,
            budget_execs,
            all_seeds,
            ref dump_trace_dir,
            ref sched,
        } => {
            let prog = load_program(program)?;
            let queue_dir = if corpus.join("queue").is_dir() {
                corpus.join("queue")
            } else {
                corpus.clone()
            };
            let params = FuzzParams::default();
            let mut seeds: Vec<CorpusSeed> = load_corpus(&queue_dir, &params)
                .map_err(|e| runtime(format!("cannot load corpus {}: {e}", queue_dir.display())))?;
            if !all_seeds {
                seeds.retain(|s| s.is_mt);
            }
            if seeds.is_empty() {
                return Err(runtime(format!(
                    "no replayable seeds in {} (try --all-seeds)",
                    queue_dir.display()
                )));
            }
            let analysis = analyze_program(&prog, InstrumentMode::AflIns, 1, &InstrumentParams::default())
                .map_err(|e| runtime(e.to_string()))?;
            let exec = Executor::new(&prog, &analysis.plan);
            let mut config = ReplayConfig::new(
                match pattern {
                    PatternArg::P1 => ReplayPattern::P1,
                    PatternArg::P2 => ReplayPattern::P2,
                },
                budget_execs,
                cli.master_seed,
            );
            config.scheduler = sched.to_config();
            let report = replay(&exec, &seeds, &config);
            if let Some(dir) = dump_trace_dir {
                fs::create_dir_all(dir)
                    .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
                for bug in &report.bugs {
                    if let Some(seed) = seeds.iter().find(|s| s.name == bug.first_seed_name) {
                        let cfg = config.scheduler.with_seed(bug.first_schedule_seed);
                        let (_, trace) = exec.run_traced(&seed.bytes, &cfg);
                        let name = format!(
                            "{}_{}_{}.trace",
                            format!("{:?}", bug.key.kind).to_lowercase(),
                            bug.key.sites.0,
                            bug.key.sites.1
                        );
                        fs::write(dir.join(name), render_trace(&trace, &prog))
                            .map_err(|e| runtime(format!("cannot write trace: {e}")))?;
                    }
                }
            }
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            write_or_print(&cli.out, &text)
        }
        Command::Bench { ref bench, runs, budget_execs, replay_budget } => {
            if runs == 0 {
                return Err(CliError::Usage("--runs must be at least 1".into()));
            }
            let case = benchmark_by_name(bench).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown benchmark `{bench}` (have: {})",
                    all_benchmarks().iter().map(|b| b.name).collect::<Vec<_>>().join(", ")
                ))
            })?;
            let cfg = BenchMatrixConfig {
                modes: vec![FuzzMode::Muzz, FuzzMode::Mafl, FuzzMode::Afl],
                runs,
                fuzz_budget: budget_execs.unwrap_or(case.fuzz_budget),
                replay_budget: replay_budget.unwrap_or(case.replay_budget),
                master_seed: cli.master_seed,
                params: FuzzParams::default(),
            };
            let table = crate::bench::run_bench_matrix(&case, &cfg);
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)
                    .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
                fs::write(
                    dir.join("bench_table.json"),
                    serde_json::to_string_pretty(&table).expect("table serializes"),
                )
                .map_err(|e| runtime(format!("cannot write table: {e}")))?;
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&table).expect("table serializes"));
            } else {
                print!("{}", render_bench_table(&table));
            }
            Ok(())
        }
        Command::Report { ref dir } => {
            let rows = collect_rows(dir)?;
            if rows.is_empty() {
                return Err(runtime(format!(
                    "no campaign artifacts under {}",
                    dir.display()
                )));
            }
            let table = aggregate(&dir.display().to_string(), rows);
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&table).expect("table serializes"));
            } else {
                print!("{}", render_bench_table(&table));
            }
            Ok(())
        }
    }
}

/// Rebuilds bench rows from `<subdir>/campaign.json` (+ optional
/// `replay.json`) artifacts.
fn collect_rows(dir: &Path) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| runtime(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("campaign.json").is_file())
        .collect();
    subdirs.sort();
    for (run, sub) in subdirs.iter().enumerate() {
        let campaign: CampaignReport = read_json(&sub.join("campaign.json"))?;
        let replay_report: Option<ReplayReport> = if sub.join("replay.json").is_file() {
            Some(read_json(&sub.join("replay.json"))?)
        } else {
            None
        };
        rows.push(BenchRow::from_reports(
            campaign.config.mode,
            run as u32,
            campaign.config.master_seed,
            &campaign,
            replay_report.as_ref(),
        ));
    }
    Ok(rows)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Re-aggregation helper shared with tests.
pub fn report_rows_from_dir(dir: &Path) -> Result<BenchTable, String> {
    collect_rows(dir)
        .map(|rows| aggregate(&dir.display().to_string(), rows))
        .map_err(|e| e.to_string())
}
