use super::*;
use crate::analysis::{analyze_program, InstrumentMode, InstrumentParams};
use crate::mtir::parse_program;

const FIG1: &str = include_str!("../../benchmarks/fig1.mtir");
const TOY_DEADLOCK: &str = include_str!("../../benchmarks/toys/toy_deadlock.mtir");
const TOY_SEQ: &str = include_str!("../../benchmarks/toys/toy_seq.mtir");

fn executor_for(src: &str, mode: InstrumentMode) -> Executor {
    let p = parse_program(src).unwrap();
    let a = analyze_program(&p, mode, 7, &InstrumentParams::default()).unwrap();
    Executor::new(&p, &a.plan)
}

#[test]
fn deterministic_replay() {
    let exec = executor_for(FIG1, InstrumentMode::MuzzIns);
    let cfg = SchedulerConfig { schedule_rng_seed: 1234, ..Default::default() };
    let a = exec.run(&[1, 2, 3], &cfg);
    let b = exec.run(&[1, 2, 3], &cfg);
    assert_eq!(a, b);
    let (c, ta) = exec.run_traced(&[1, 2, 3], &cfg);
    let (_, tb) = exec.run_traced(&[1, 2, 3], &cfg);
    assert_eq!(a, c);
    assert_eq!(ta, tb);
}

#[test]
fn fig1_realizes_both_final_values() {
    // Threads do atomic g_var += 1 and g_var *= 2 from -1: the reachable
    // finals are 2 and 4, and sampling schedules must see both.
    let p = parse_program(FIG1).unwrap();
    let a = analyze_program(&p, InstrumentMode::MuzzIns, 7, &InstrumentParams::default()).unwrap();
    let exec = Executor::new(&p, &a.plan);
    let g_slot = p.global_index("g_var").unwrap();
    let mut finals = std::collections::BTreeSet::new();
    for seed in 0..200u64 {
        let cfg = SchedulerConfig { schedule_rng_seed: seed, ..Default::default() };
        let (res, trace) = exec.run_traced(&[1], &cfg);
        assert_eq!(res.exit, ExitStatus::Exit(0));
        assert!(res.is_mt);
        assert_eq!(res.threads_forked, 2);
        finals.insert(trace.final_shared[g_slot]);
    }
    assert_eq!(finals.into_iter().collect::<Vec<_>>(), vec![2, 4]);
}

#[test]
fn single_threaded_run_has_empty_signature() {
    let exec = executor_for(TOY_SEQ, InstrumentMode::AflIns);
    let res = exec.run(&[5, 6], &SchedulerConfig::default());
    assert!(!res.is_mt);
    assert!(res.s_ctx.is_empty());
    assert_eq!(res.threads_forked, 0);
    assert_eq!(res.exit, ExitStatus::Exit(0));
}

#[test]
fn guaranteed_deadlock_detected() {
    let exec = executor_for(TOY_DEADLOCK, InstrumentMode::AflIns);
    for seed in 0..20 {
        let cfg = SchedulerConfig { schedule_rng_seed: seed, ..Default::default() };
        let (res, trace) = exec.run_traced(&[], &cfg);
        assert_eq!(res.exit, ExitStatus::Deadlock);
        assert_eq!(trace.blocked.len(), 2);
    }
}

#[test]
fn div_by_zero_crashes_with_backtrace() {
    let src = "fn main { b0: call f exit 0 } fn f { f0: x = const 0 y = div 1, x return }";
    let exec = executor_for(src, InstrumentMode::AflIns);
    let res = exec.run(&[], &SchedulerConfig::default());
    match res.exit {
        ExitStatus::Crash { ref tag, ref backtrace } => {
            assert_eq!(tag, "div-by-zero");
            let fns: Vec<&str> = backtrace.iter().map(|f| f.function.as_str()).collect();
            assert_eq!(fns, ["main", "f"]);
        }
        other => panic!("expected crash, got {other:?}"),
    }
}

#[test]
fn undeclared_shared_access_crashes() {
    let src = "fn main { b0: x = load ghost exit 0 }";
    let exec = executor_for(src, InstrumentMode::AflIns);
    let res = exec.run(&[], &SchedulerConfig::default());
    assert!(matches!(res.exit, ExitStatus::Crash { ref tag, .. } if tag == "undeclared-shared"));
}

#[test]
fn crash_opcode_reports_tag() {
    let src = "fn main { b0: crash \"boom\" exit 0 }";
    let exec = executor_for(src, InstrumentMode::AflIns);
    let res = exec.run(&[], &SchedulerConfig::default());
    assert!(matches!(res.exit, ExitStatus::Crash { ref tag, .. } if tag == "boom"));
}

#[test]
fn step_budget_reported_as_hang() {
    let src = "fn main { b0: jump b0 }";
    let exec = executor_for(src, InstrumentMode::AflIns);
    let cfg = SchedulerConfig { max_steps: 1000, ..Default::default() };
    let res = exec.run(&[], &cfg);
    assert_eq!(res.exit, ExitStatus::StepBudgetExhausted);
    assert_eq!(res.steps, 1000);
}

#[test]
fn input_reads_are_total() {
    let src = "fn main { b0: a = input 0 b = input 99 n = inputlen exit 0 }";
    let exec = executor_for(src, InstrumentMode::AflIns);
    let res = exec.run(&[7], &SchedulerConfig::default());
    assert_eq!(res.exit, ExitStatus::Exit(0));
}

#[test]
fn unlock_of_unheld_mutex_crashes() {
    let src = "mutex 1 fn main { b0: unlock 0 exit 0 }";
    let exec = executor_for(src, InstrumentMode::AflIns);
    let res = exec.run(&[], &SchedulerConfig::default());
    assert!(matches!(res.exit, ExitStatus::Crash { ref tag, .. } if tag == "unlock-not-held"));
}

#[test]
fn fig1_signatures_vary_with_schedule() {
    let exec = executor_for(FIG1, InstrumentMode::MuzzIns);
    let mut results = Vec::new();
    for seed in 0..40u64 {
        let cfg = SchedulerConfig { schedule_rng_seed: seed, ..Default::default() };
        results.push(exec.run(&[1], &cfg));
    }
    assert!(distinct_signatures(&results) >= 2, "expected at least two lock-event orderings");
}

#[test]
fn distinct_signature_counting() {
    let exec = executor_for(FIG1, InstrumentMode::MuzzIns);
    let cfg = SchedulerConfig { schedule_rng_seed: 5, ..Default::default() };
    let one = exec.run(&[1], &cfg);
    let results = vec![one.clone(), one.clone(), one];
    assert_eq!(distinct_signatures(&results), 1);
    let seq = executor_for(TOY_SEQ, InstrumentMode::AflIns);
    let st = seq.run(&[1], &cfg);
    assert_eq!(distinct_signatures(&[st]), 0);
}

#[test]
fn leak_reported_on_exit_without_join() {
    let src = "global h = 0 fn main { b0: fork side exit 0 } fn side { s0: store h, 1 return }";
    let exec = executor_for(src, InstrumentMode::AflIns);
    let cfg = SchedulerConfig::default();
    let (_, trace) = exec.run_traced(&[], &cfg);
    assert_eq!(trace.leaked.len(), 1);
    assert_eq!(trace.leaked[0].thread, 1);
}

#[test]
fn joined_threads_do_not_leak() {
    let exec = executor_for(FIG1, InstrumentMode::MuzzIns);
    let (_, trace) = exec.run_traced(&[1], &SchedulerConfig::default());
    assert!(trace.leaked.is_empty());
}

#[test]
fn trace_render_has_line_per_step() {
    let p = parse_program(TOY_SEQ).unwrap();
    let a = analyze_program(&p, InstrumentMode::AflIns, 7, &InstrumentParams::default()).unwrap();
    let exec = Executor::new(&p, &a.plan);
    let (res, trace) = exec.run_traced(&[1, 2], &SchedulerConfig::default());
    let text = render_trace(&trace, &p);
    assert_eq!(text.lines().count() as u64, res.steps + 1); // steps + exit line
    assert!(text.lines().next().unwrap().starts_with("0, main, b0, 0,"));
}

#[test]
fn intervention_draws_child_priorities() {
    // With intervention disabled the schedule is still random but priority
    // uniform; both settings must be deterministic per seed.
    let exec = executor_for(FIG1, InstrumentMode::MuzzIns);
    for intervention in [false, true] {
        let cfg = SchedulerConfig {
            schedule_rng_seed: 99,
            intervention_enabled: intervention,
            ..Default::default()
        };
        assert_eq!(exec.run(&[1], &cfg), exec.run(&[1], &cfg));
    }
}
