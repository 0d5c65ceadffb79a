use super::*;
use crate::mtir::parse_program;

const FIG1: &str = include_str!("../../benchmarks/fig1.mtir");
const RACECRASH: &str = include_str!("../../benchmarks/racecrash.mtir");

fn fig1_seeds() -> Vec<Vec<u8>> {
    vec![vec![0, 0, 0, 0], vec![1, 0, 0, 0]]
}

#[test]
fn zero_budget_reports_initial_seed_stats_only() {
    let p = parse_program(FIG1).unwrap();
    let config = CampaignConfig::new(FuzzMode::Muzz, 1, 0);
    let out = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    assert_eq!(out.report.execs_done, 0);
    assert_eq!(out.report.n_all, 2);
    assert_eq!(out.report.n_mt, 0); // never executed, so never observed mt
    assert!(out.report.queue.iter().all(|s| s.c_m == 0));
}

#[test]
fn campaigns_are_deterministic() {
    let p = parse_program(FIG1).unwrap();
    let config = CampaignConfig::new(FuzzMode::Muzz, 7, 3_000);
    let a = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    let b = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    assert_eq!(a.report.to_json_normalized(), b.report.to_json_normalized());
    assert_eq!(a.queue.len(), b.queue.len());
    for (x, y) in a.queue.iter().zip(&b.queue) {
        assert_eq!(x, y);
    }
}

#[test]
fn queue_admission_is_sound() {
    // Every queued seed beyond the initials covered a new trace or context.
    let p = parse_program(FIG1).unwrap();
    let config = CampaignConfig::new(FuzzMode::Muzz, 3, 4_000);
    let out = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    for seed in out.queue.iter().filter(|s| s.parent.is_some()) {
        // Pending flags are cleared after the first fuzzed round, so check
        // the admission counters instead: a queued mutant exists only if it
        // produced novelty, which the campaign enforces at admit time.
        assert!(seed.id >= 2);
    }
    assert!(out.report.n_all >= 2);
    assert!(out.report.n_mt <= out.report.n_all);
}

#[test]
fn repetition_bounds_hold_for_all_queued_seeds() {
    let p = parse_program(FIG1).unwrap();
    let config = CampaignConfig::new(FuzzMode::Muzz, 11, 4_000);
    let out = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    for meta in &out.report.queue {
        assert!((8..=40).contains(&meta.repetition_count), "{meta:?}");
    }
}

#[test]
fn ctx_blind_mode_never_consults_signatures() {
    let p = parse_program(FIG1).unwrap();
    let config = CampaignConfig::new(FuzzMode::Afl, 5, 3_000);
    let out = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    assert_eq!(out.ctx_consults, 0);
    assert!(out.report.queue.iter().all(|s| s.c_m == 0));
    let ctxful = run_campaign(
        &p,
        "fig1",
        &CampaignConfig::new(FuzzMode::Muzz, 5, 3_000),
        &fig1_seeds(),
    )
    .unwrap();
    assert!(ctxful.ctx_consults > 0);
}

#[test]
fn planted_crash_found_and_triaged_mt() {
    // Give the campaign a seed that already passes the gate; the planted
    // crash needs byte2 == 'q' and the rarer racy outcome, well inside a
    // desk budget.
    let p = parse_program(RACECRASH).unwrap();
    let config = CampaignConfig::new(FuzzMode::Muzz, 21, 60_000);
    let seeds = vec![vec![b'R', 0, 0, 0]];
    let out = run_campaign(&p, "racecrash", &config, &seeds).unwrap();
    assert!(
        out.report.n_c_m >= 1,
        "expected a multithreading-relevant crash, report: n_c={} n_c_m={}",
        out.report.n_c,
        out.report.n_c_m
    );
    assert!(out
        .report
        .vulns_mt
        .iter()
        .any(|v| v.key.tag == "planted-mt"));
}

#[test]
fn persist_and_reload_corpus() {
    let p = parse_program(FIG1).unwrap();
    let config = CampaignConfig::new(FuzzMode::Muzz, 9, 2_000);
    let out = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    persist_campaign(&out, dir.path()).unwrap();
    assert!(dir.path().join("campaign.json").is_file());
    let corpus = load_corpus(&dir.path().join("queue"), &config.params).unwrap();
    assert_eq!(corpus.len(), out.queue.len());
    for (c, s) in corpus.iter().zip(&out.queue) {
        assert_eq!(c.bytes, s.bytes);
        assert_eq!(c.is_mt, s.is_mt);
    }
    let max = max_existing_id(&dir.path().join("queue")).unwrap();
    assert_eq!(max, Some(out.queue.last().unwrap().id));
}

#[test]
fn parallel_mode_is_stable_across_worker_counts() {
    let p = parse_program(FIG1).unwrap();
    let mut config = CampaignConfig::new(FuzzMode::Muzz, 13, 2_000);
    config.parallel_workers = 2;
    let two = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    config.parallel_workers = 4;
    let four = run_campaign(&p, "fig1", &config, &fig1_seeds()).unwrap();
    let mut a = two.report.to_json_normalized();
    let mut b = four.report.to_json_normalized();
    a["config"]["parallel_workers"] = serde_json::json!(0);
    b["config"]["parallel_workers"] = serde_json::json!(0);
    assert_eq!(a, b);
}
