use std::fs;
use std::path::Path;
use std::process::Command;

use trust_iohmm::analysis::{
    cmd_evaluate_policy, cmd_filter, cmd_fit, cmd_ground, cmd_simulate, load_model, session_trust_trace,
    AnalysisError, ComparisonReport, PairMode, ReportFormat, FIT_REPORT_SCHEMA,
};
use trust_iohmm::grounding::REFERENCE_CURVE;
use trust_iohmm::iohmm::FitConfig;
use trust_iohmm::simulator::{simulate_cohort, EnvConfig, MessagePolicy};
use trust_iohmm::trust::{
    paper_reference_params, read_log_paths, write_log_string, Complexity, HumanAction, Outcome, RobotMessage,
    SessionLog, TrialRecord,
};

const BIN: &str = env!("CARGO_BIN_EXE_trust-iohmm");

fn env(n_trials: u32, seed: u64) -> EnvConfig {
    EnvConfig {
        n_trials,
        seed,
        ..EnvConfig::default()
    }
}

fn quick_fit() -> FitConfig {
    FitConfig {
        restarts: 3,
        max_iterations: 100,
        ..FitConfig::default()
    }
}

fn manual_trial(i: u32) -> TrialRecord {
    TrialRecord::new(i, Complexity::Low, HumanAction::Manual, Outcome::NotApplicable, RobotMessage::None).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_byte_identical_and_round_trips() {
    let m = paper_reference_params();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let summary = cmd_simulate(&m, &env(30, 5), &MessagePolicy::RoundRobin, 6, a.path()).unwrap();
    cmd_simulate(&m, &env(30, 5), &MessagePolicy::RoundRobin, 6, b.path()).unwrap();
    assert_eq!(summary.sessions, 6);
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert_eq!(read_dir_sorted(a.path()).len(), 12);

    let parsed = read_log_paths(&[a.path()]).unwrap();
    let cohort = simulate_cohort(&m, &env(30, 5), &MessagePolicy::RoundRobin, 6).unwrap();
    let logs: Vec<SessionLog> = cohort.into_iter().map(|s| s.log).collect();
    assert_eq!(parsed, logs);
}

#[test]
fn fit_reports_against_reference() {
    let dir = tempfile::tempdir().unwrap();
    let m = paper_reference_params();
    cmd_simulate(&m, &env(60, 1), &MessagePolicy::RoundRobin, 40, dir.path()).unwrap();
    let sessions = read_log_paths(&[dir.path()]).unwrap();
    let report = cmd_fit(&sessions, &quick_fit()).unwrap();
    assert_eq!(report.schema, FIT_REPORT_SCHEMA);
    assert_eq!(report.sessions_used, 40);
    assert!(report.input_counts.transition.iter().all(|&c| c > 0));
    assert!(report.fitted.emission(0, 0, 0) >= report.fitted.emission(0, 1, 0));

    let json = report.render(ReportFormat::Structured);
    let back: ComparisonReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let path = dir.path().join("report.json");
    fs::write(&path, json).unwrap();
    assert_eq!(load_model(&path).unwrap(), report.fitted);

    let table = report.render(ReportFormat::Table);
    assert!(table.contains("max |deviation|"));
}

#[test]
fn fit_excludes_practice_and_flags_unseen_events() {
    let practice = SessionLog::new("p1", true, (1..=5).map(manual_trial).collect()).unwrap();
    let one = SessionLog::new("p1", false, vec![manual_trial(1)]).unwrap();
    let report = cmd_fit(&[practice.clone(), one], &quick_fit()).unwrap();
    assert_eq!(report.practice_sessions_excluded, 1);
    assert_eq!(report.sessions_used, 1);
    let flagged = report.warnings.iter().filter(|w| w.starts_with("transition input")).count();
    assert_eq!(flagged, 6);

    assert!(matches!(cmd_fit(&[practice], &quick_fit()), Err(AnalysisError::NoUsableSequences)));
    assert!(matches!(cmd_fit(&[], &quick_fit()), Err(AnalysisError::NoSessions)));
}

#[test]
fn filter_traces_start_at_the_initial_mass() {
    let m = paper_reference_params();
    let cohort = simulate_cohort(&m, &env(20, 3), &MessagePolicy::UniformRandom, 4).unwrap();
    let logs: Vec<SessionLog> = cohort.into_iter().map(|s| s.log).collect();
    let table = cmd_filter(&logs, &m).unwrap();
    assert_eq!(table.rows.len(), 80);
    assert!(table.rows.iter().all(|r| (0.0..=1.0).contains(&r.p_high)));
    for r in table.rows.iter().filter(|r| r.trial == 1) {
        assert_eq!(r.p_high, m.initial()[0]);
    }
    let csv = table.render(ReportFormat::Table);
    assert!(csv.starts_with("session_id,trial,p_high\n"));
    assert_eq!(csv.lines().count(), 81);

    assert!(matches!(cmd_filter(&[], &m), Err(AnalysisError::NoSessions)));
}

#[test]
fn filter_skips_sessions_the_model_cannot_explain() {
    // Pinned to high trust, manual delivery at low complexity has probability zero.
    let mut v = serde_json::to_value(paper_reference_params()).unwrap();
    v["initial"] = serde_json::json!([1.0, 0.0]);
    let pinned = serde_json::from_value(v).unwrap();
    let bad = SessionLog::new("x", false, vec![manual_trial(1), manual_trial(2)]).unwrap();
    let table = cmd_filter(&[bad], &pinned).unwrap();
    assert!(table.rows.is_empty());
    assert_eq!(table.skipped.len(), 1);
    assert_eq!(table.skipped[0].0, "x");
}

/// Sessions with self-reports generated from the reference curve.
fn reporting_cohort(n: usize) -> Vec<SessionLog> {
    let m = paper_reference_params();
    simulate_cohort(&m, &env(30, 17), &MessagePolicy::UniformRandom, n)
        .unwrap()
        .into_iter()
        .map(|s| {
            let trace = session_trust_trace(&m, &s.log).unwrap();
            let trials = s
                .log
                .trials()
                .iter()
                .zip(trace)
                .map(|(t, p)| {
                    let r = REFERENCE_CURVE.invert(p).unwrap_or(if p > 0.5 { 10.0 } else { 1.0 }).round().clamp(1.0, 10.0) as u8;
                    t.clone().with_report(r).unwrap()
                })
                .collect();
            SessionLog::new(s.log.participant_id, false, trials).unwrap()
        })
        .collect()
}

#[test]
fn ground_pairs_reports_with_filtered_trust() {
    let m = paper_reference_params();
    let mut sessions = reporting_cohort(30);
    let flat = SessionLog::new(
        "flat",
        false,
        (1..=6).map(|i| manual_trial(i).with_report(5).unwrap()).collect(),
    )
    .unwrap();
    sessions.push(flat);

    let report = cmd_ground(&sessions, &m, PairMode::Median).unwrap();
    assert_eq!(report.sessions_used, 30);
    assert!(report.warnings.iter().any(|w| w.contains("flat")));
    assert_eq!(report.pairs.len(), 30 * 10);
    assert!(report.medians.len() >= 4);
    let c = report.fit.curve;
    assert!(c.asymptote > 0.0 && c.asymptote <= 1.0 && c.slope > 0.0);

    let mean = cmd_ground(&sessions, &m, PairMode::Mean).unwrap();
    assert_eq!(mean.pairs, report.pairs);
    assert!(report.curve_csv().starts_with("asymptote,slope,midpoint,residual_norm,n_pairs,mode\n"));
    assert!(report.pairs_csv().starts_with("source,session_id,group,report_avg,p_high_avg,n\n"));
}

#[test]
fn ground_needs_enough_pairs() {
    let m = paper_reference_params();
    let few = SessionLog::new(
        "few",
        false,
        (1..=3)
            .map(|i| manual_trial(i).with_report(i as u8 + 2).unwrap())
            .collect(),
    )
    .unwrap();
    assert!(cmd_ground(&[few], &m, PairMode::Mean).is_err());
    let silent = SessionLog::new("s", false, vec![manual_trial(1)]).unwrap();
    assert!(matches!(cmd_ground(&[silent], &m, PairMode::Median), Err(AnalysisError::NoSelfReports)));
}

#[test]
fn evaluate_policy_table() {
    let m = paper_reference_params();
    let one = cmd_evaluate_policy(&m, &env(10, 0), &["fixed:long".to_string()], 200).unwrap();
    assert_eq!(one.estimates.len(), 1);
    let csv = one.render(ReportFormat::Table);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("fixed:long,"));

    let a = cmd_evaluate_policy(&m, &env(10, 4), &["uniform".to_string()], 1).unwrap();
    let b = cmd_evaluate_policy(&m, &env(10, 4), &["uniform".to_string()], 1).unwrap();
    assert_eq!(a, b);

    assert!(cmd_evaluate_policy(&m, &env(10, 0), &["fixed:sorry".to_string()], 10).is_err());
    assert!(cmd_evaluate_policy(&m, &env(10, 0), &[], 10).is_err());
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn binary_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let sim_s = sim.to_str().unwrap();
    let out = run(&["simulate", "--participants", "3", "--trials", "12", "--seed", "4", "--out", sim_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sim.join("sim-002.hidden.jsonl").exists());

    let csv = dir.path().join("trace.csv");
    let out = run(&["filter", sim_s, "--paper-params", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 12);

    let report = dir.path().join("fit.json");
    let out = run(&["fit", sim_s, "--restarts", "2", "--max-iter", "30", "--format", "structured", "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["filter", sim_s, "--model", report.to_str().unwrap()]);
    assert!(out.status.success());

    let out = run(&["evaluate-policy", "--n-mc", "50", "--trials", "5", "--policies", "fixed:long;round-robin"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
}

#[test]
fn binary_reports_corrupt_lines_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let m = paper_reference_params();
    let logs: Vec<SessionLog> = simulate_cohort(&m, &env(3, 0), &MessagePolicy::UniformRandom, 1)
        .unwrap()
        .into_iter()
        .map(|s| s.log)
        .collect();
    let mut text = write_log_string(&logs);
    text.push_str("{\"participant_id\": \"sim-000\", \"trial\": 4, \"complexity\": \"X\"}\n");
    let path = dir.path().join("broken.jsonl");
    fs::write(&path, text).unwrap();

    let out = run(&["fit", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.jsonl") && err.contains("line 4"), "{err}");

    let out = run(&["evaluate-policy", "--policies", "telepathy"]);
    assert!(!out.status.success());
}
