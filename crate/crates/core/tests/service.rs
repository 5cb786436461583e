use std::collections::HashSet;
use std::fs;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;
use trust_iohmm::analysis::cmd_filter;
use trust_iohmm::service::{
    router, AppState, Command, LiveSession, Phase, ServiceConfig, SessionConfig, SessionError,
};
use trust_iohmm::simulator::{EnvConfig, MessagePolicy};
use trust_iohmm::trust::{
    counting_reward, delivery_reward, paper_reference_params, parse_log_str, CountingAnswer, HumanAction,
    RobotMessage,
};

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::Null);
    (status, value, text)
}

fn app_in(dir: &std::path::Path) -> (AppState, Router) {
    let (state, warnings) = AppState::open(ServiceConfig::new(dir)).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    (state.clone(), router(state))
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v, text) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{text}");
    v["session_id"].as_str().unwrap().to_string()
}

/// Plays one full trial and returns the action response.
async fn play_trial(app: &Router, id: &str, action: &str, report: i64) -> Value {
    let (s, outcome, text) = call(app, "POST", &format!("/sessions/{id}/action"), Some(json!({ "action": action }))).await;
    assert_eq!(s, StatusCode::OK, "{text}");
    if action == "manual" {
        let (s, _, _) = call(app, "POST", &format!("/sessions/{id}/manual"), Some(json!({ "completed": true }))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (s, _, _) = call(
        app,
        "POST",
        &format!("/sessions/{id}/count"),
        Some(json!({ "answer": 3, "expected": 3, "timed_out": false })),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let (s, _, _) = call(app, "POST", &format!("/sessions/{id}/trust"), Some(json!({ "value": report }))).await;
    assert_eq!(s, StatusCode::OK);
    outcome
}

#[tokio::test]
async fn default_session_starts_at_initial_belief() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let (status, v, _) = call(&app, "POST", "/sessions", Some(json!({ "researcher_mode": true }))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["n_trials"], 60);
    let id = v["session_id"].as_str().unwrap();

    let (s, est, _) = call(&app, "GET", &format!("/sessions/{id}/estimate"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!((est["p_high"].as_f64().unwrap() - 0.06).abs() < 1e-12);

    let (s, trial, _) = call(&app, "GET", &format!("/sessions/{id}/trial"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(trial["trial"], 1);
    assert_eq!(trial["phase"], "awaiting_action");
    assert_eq!(trial["counting_time_limit_secs"], 15);
}

#[tokio::test]
async fn empty_body_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let (status, v, _) = call(&app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["researcher_mode"], false);
}

#[tokio::test]
async fn validation_and_lookup_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let (s, v, _) = call(&app, "POST", "/sessions", Some(json!({ "success_probability": 1.5 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("success_probability"));
    let (s, _, _) = call(&app, "POST", "/sessions", Some(json!({ "policy": "fixed:sorry" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _, _) = call(&app, "POST", "/sessions", Some(json!({ "n_trails": 3 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    for (m, path) in [
        ("GET", "trial"),
        ("POST", "action"),
        ("POST", "manual"),
        ("POST", "count"),
        ("POST", "trust"),
        ("GET", "estimate"),
        ("GET", "log"),
    ] {
        let (s, _, _) = call(&app, m, &format!("/sessions/nope/{path}"), Some(json!({}))).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{path}");
    }

    let id = create(&app, json!({})).await;
    let (s, _, _) = call(&app, "POST", &format!("/sessions/{id}/count"), Some(json!({ "expected": 1 }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _, _) = call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({ "action": "fly" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _, _) = call(&app, "GET", &format!("/sessions/{id}/estimate"), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);

    call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({ "action": "manual" }))).await;
    call(&app, "POST", &format!("/sessions/{id}/manual"), Some(json!({ "completed": false }))).await;
    call(&app, "POST", &format!("/sessions/{id}/count"), Some(json!({ "expected": 1, "timed_out": true }))).await;
    let (s, _, _) = call(&app, "POST", &format!("/sessions/{id}/trust"), Some(json!({ "value": 11 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _, _) = call(&app, "POST", &format!("/sessions/{id}/trust"), Some(json!({ "value": 0 }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _, _) = call(&app, "POST", &format!("/sessions/{id}/trust"), Some(json!({ "value": 7 }))).await;
    assert_eq!(s, StatusCode::OK);

    let (_, _, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
    let parsed = parse_log_str(&log).unwrap();
    let t = &parsed[0].trials()[0];
    assert!(t.manual_abandoned);
    assert_eq!(t.reported_trust, Some(7));
    assert_eq!(t.counting, Some(CountingAnswer::NoAnswer));
}

#[tokio::test]
async fn rewards_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());

    let lucky = create(&app, json!({ "success_probability": 1.0, "n_trials": 2 })).await;
    let out = play_trial(&app, &lucky, "auto", 5).await;
    assert_eq!(out["delivery_score_delta"], 50);
    assert_eq!(out["outcome"], "success");
    assert!(out.get("message").is_none());

    let doomed = create(&app, json!({ "success_probability": 0.0, "n_trials": 3, "policy": "fixed:denial" })).await;
    let variants = RobotMessage::Denial.variants();
    for k in 0..3 {
        let out = play_trial(&app, &doomed, "auto", 2).await;
        assert_eq!(out["delivery_score_delta"], -100);
        assert_eq!(out["message"]["strategy"], "denial");
        assert_eq!(out["message"]["text"], variants[k % 2]);
    }
    let (s, _, _) = call(&app, "GET", &format!("/sessions/{doomed}/trial"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let manual = create(&app, json!({ "n_trials": 1 })).await;
    let (_, v, _) = call(&app, "POST", &format!("/sessions/{manual}/action"), Some(json!({ "action": "manual" }))).await;
    assert_eq!(v["phase"], "manual_delivery");
    assert!(v.get("delivery_score_delta").is_none());
    let (_, v, _) = call(&app, "POST", &format!("/sessions/{manual}/manual"), Some(json!({ "completed": true }))).await;
    assert_eq!(v["delivery_score_delta"], 30);
    assert_eq!(v["phase"], "counting");
    let (_, v, _) = call(
        &app,
        "POST",
        &format!("/sessions/{manual}/count"),
        Some(json!({ "answer": 4, "expected": 5 })),
    )
    .await;
    assert_eq!(v["counting_score_delta"], -20);
}

#[tokio::test]
async fn robot_names_change_every_trial() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let id = create(&app, json!({ "seed": 1 })).await;
    let mut seen = HashSet::new();
    for _ in 0..60 {
        let (_, v, _) = call(&app, "GET", &format!("/sessions/{id}/trial"), None).await;
        assert!(seen.insert(v["robot_name"].as_str().unwrap().to_string()));
        play_trial(&app, &id, "manual", 4).await;
    }
}

#[tokio::test]
async fn practice_sessions_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let id = create(&app, json!({ "n_trials": 5, "practice": true })).await;
    for _ in 0..5 {
        play_trial(&app, &id, "auto", 6).await;
    }
    let (_, _, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(log.lines().count(), 5);
    let parsed = parse_log_str(&log).unwrap();
    assert!(parsed[0].practice);
}

#[tokio::test]
async fn live_estimates_match_offline_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let id = create(&app, json!({ "researcher_mode": true, "seed": 12, "n_trials": 12 })).await;
    let mut live = vec![];
    for t in 0..12 {
        let (_, est, _) = call(&app, "GET", &format!("/sessions/{id}/estimate"), None).await;
        live.push(est["p_high"].as_f64().unwrap());
        play_trial(&app, &id, if t % 3 == 1 { "manual" } else { "auto" }, 5).await;
    }
    let (_, _, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
    let table = cmd_filter(&parse_log_str(&log).unwrap(), &paper_reference_params()).unwrap();
    assert_eq!(table.rows.len(), 12);
    for (a, r) in live.iter().zip(&table.rows) {
        assert!((a - r.p_high).abs() <= 1e-12);
    }
}

#[tokio::test]
async fn restart_replays_persisted_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before_trial, before_est, before_log) = {
        let (_, app) = app_in(dir.path());
        let id = create(&app, json!({ "researcher_mode": true, "seed": 77, "n_trials": 8 })).await;
        for _ in 0..3 {
            play_trial(&app, &id, "auto", 7).await;
        }
        call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!({ "action": "manual" }))).await;
        let (_, trial, _) = call(&app, "GET", &format!("/sessions/{id}/trial"), None).await;
        let (_, est, _) = call(&app, "GET", &format!("/sessions/{id}/estimate"), None).await;
        let (_, _, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
        (id, trial, est, log)
    };

    let (state, app) = app_in(dir.path());
    assert_eq!(state.session_ids(), vec![id.clone()]);
    let (_, trial, _) = call(&app, "GET", &format!("/sessions/{id}/trial"), None).await;
    let (_, est, _) = call(&app, "GET", &format!("/sessions/{id}/estimate"), None).await;
    let (_, _, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(trial, before_trial);
    assert_eq!(trial["phase"], "manual_delivery");
    assert_eq!(est, before_est);
    assert_eq!(log, before_log);
    assert_eq!(fs::read_to_string(dir.path().join(format!("{id}.log.jsonl"))).unwrap(), log);

    // The recovered session continues where it stopped.
    let (s, v, _) = call(&app, "POST", &format!("/sessions/{id}/manual"), Some(json!({ "completed": true }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["phase"], "counting");
}

#[tokio::test]
async fn torn_journal_tail_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let (_, app) = app_in(dir.path());
        let id = create(&app, json!({ "seed": 3 })).await;
        play_trial(&app, &id, "auto", 7).await;
        id
    };
    let journal = dir.path().join(format!("{id}.journal"));
    let mut text = fs::read_to_string(&journal).unwrap();
    text.push_str("{\"command\":\"act");
    fs::write(&journal, text).unwrap();
    // A stale canonical log is rebuilt from the journal.
    fs::write(dir.path().join(format!("{id}.log.jsonl")), "").unwrap();

    let (state, warnings) = AppState::open(ServiceConfig::new(dir.path())).unwrap();
    assert_eq!(warnings.len(), 2, "{warnings:?}");
    let app = router(state);
    let (_, trial, _) = call(&app, "GET", &format!("/sessions/{id}/trial"), None).await;
    assert_eq!(trial["trial"], 2);
    assert_eq!(trial["phase"], "awaiting_action");
    assert_eq!(fs::read_to_string(dir.path().join(format!("{id}.log.jsonl"))).unwrap().lines().count(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_stay_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (_, app) = app_in(dir.path());
    let mut handles = vec![];
    for k in 0..8u64 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let id = create(&app, json!({ "seed": k, "n_trials": 6 })).await;
            for _ in 0..6 {
                play_trial(&app, &id, "auto", 5).await;
            }
            let (_, _, log) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
            log.lines().count()
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), 6);
    }
}

// ---- state-machine safety

#[derive(Debug, Clone)]
enum Op {
    Action(bool),
    Manual(bool),
    Count(Option<i64>, bool),
    Trust(i64),
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        any::<bool>().prop_map(Op::Action),
        any::<bool>().prop_map(Op::Manual),
        (proptest::option::of(0i64..4), any::<bool>()).prop_map(|(a, t)| Op::Count(a, t)),
        (-1i64..12).prop_map(Op::Trust),
    ]
}

fn command(op: &Op) -> Command {
    match *op {
        Op::Action(auto) => Command::Action {
            action: if auto { HumanAction::AutoDeploy } else { HumanAction::Manual },
        },
        Op::Manual(completed) => Command::Manual { completed },
        Op::Count(answer, timed_out) => Command::Count {
            answer,
            expected: 2,
            timed_out,
        },
        Op::Trust(value) => Command::Trust { value },
    }
}

/// Phase in which an operation is legal.
fn allowed(op: &Op) -> Phase {
    match op {
        Op::Action(_) => Phase::AwaitingAction,
        Op::Manual(_) => Phase::ManualDelivery,
        Op::Count(..) => Phase::Counting,
        Op::Trust(_) => Phase::AwaitingTrustReport,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn operations_only_succeed_in_their_phase(
        ops in proptest::collection::vec(op_strategy(), 1..80),
        seed in any::<u64>(),
    ) {
        let config = SessionConfig {
            session_id: "prop".into(),
            env: EnvConfig { n_trials: 4, seed, ..EnvConfig::default() },
            policy: MessagePolicy::UniformRandom,
            researcher_mode: true,
            practice: false,
            counting_time_limit_secs: 15,
        };
        let mut s = LiveSession::new(config, paper_reference_params()).unwrap();
        for op in &ops {
            let before = (s.phase(), s.delivery_score(), s.counting_score(), s.log().len());
            let result = s.apply(&command(op));
            let legal = before.0 == allowed(op) && !matches!(op, Op::Trust(v) if !(1..=10).contains(v));
            prop_assert_eq!(result.is_ok(), legal, "{:?} in {:?}: {:?}", op, before.0, result);
            if let Err(e) = &result {
                if before.0 != allowed(op) {
                    let is_wrong_phase = matches!(e, SessionError::WrongPhase { .. });
                    prop_assert!(is_wrong_phase);
                }
                prop_assert_eq!(before, (s.phase(), s.delivery_score(), s.counting_score(), s.log().len()));
            }
            // Completed trials account for every point scored outside the pending trial.
            let completed_delivery: i32 = s.log().trials().iter()
                .map(|t| delivery_reward(t.human_action, t.outcome).unwrap()).sum();
            let completed_counting: i32 = s.log().trials().iter()
                .filter_map(|t| t.counting).map(counting_reward).sum();
            if matches!(s.phase(), Phase::AwaitingAction | Phase::Finished) {
                prop_assert_eq!(s.delivery_score(), completed_delivery);
                prop_assert_eq!(s.counting_score(), completed_counting);
            }
            let est = s.estimate().unwrap();
            prop_assert!((est.belief.sum() - 1.0).abs() < 1e-12);
        }
    }
}
