//! HTTP service for running live delivery trials.
//!
//! | method | path                     | body                                   |
//! |--------|--------------------------|----------------------------------------|
//! | POST   | `/sessions`              | [`CreateSession`] (all fields optional) |
//! | GET    | `/sessions/{id}/trial`   |                                        |
//! | POST   | `/sessions/{id}/action`  | `{"action": "auto" \| "manual"}`       |
//! | POST   | `/sessions/{id}/manual`  | `{"completed": bool}`                  |
//! | POST   | `/sessions/{id}/count`   | `{"answer": n?, "expected": n, "timed_out": bool}` |
//! | POST   | `/sessions/{id}/trust`   | `{"value": 1..=10}`                    |
//! | GET    | `/sessions/{id}/estimate`| researcher sessions only               |
//! | GET    | `/sessions/{id}/log`     | canonical log lines                    |
//!
//! Errors are `{"error": "..."}` with 404 for an unknown session, 409 for an
//! operation outside its phase, 422 for invalid input and 403 for estimates
//! on participant sessions.
//!
//! Sessions live in a registry behind a read-write lock; each session has its
//! own mutex so commands to one session are serialized while different
//! sessions proceed independently.

mod session;
mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use session::{
    Command, CommandResult, LiveSession, Phase, SessionConfig, SessionError, ShownMessage, TrialView,
    TrustEstimate, DEFAULT_COUNTING_LIMIT_SECS, ROBOT_NAMES,
};
pub use store::{Recovered, SessionStore, StoreError};

use crate::iohmm::ModelParams;
use crate::simulator::{ComplexitySchedule, EnvConfig, MessagePolicy, SimError};
use crate::trust::{paper_reference_params, write_log_string, HumanAction};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub params: ModelParams,
    /// Defaults for sessions that do not override them; the seed is ignored.
    pub default_env: EnvConfig,
    pub default_policy: MessagePolicy,
    pub counting_time_limit_secs: u32,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            params: paper_reference_params(),
            default_env: EnvConfig::default(),
            default_policy: MessagePolicy::UniformRandom,
            counting_time_limit_secs: DEFAULT_COUNTING_LIMIT_SECS,
        }
    }
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub n_trials: Option<u32>,
    pub success_probability: Option<f64>,
    pub p_high_complexity: Option<f64>,
    pub seed: Option<u64>,
    /// `fixed:<strategy>`, `uniform`, `round-robin` or `scripted:<list>`.
    pub policy: Option<String>,
    #[serde(default)]
    pub researcher_mode: bool,
    #[serde(default)]
    pub practice: bool,
    pub counting_time_limit_secs: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub n_trials: u32,
    pub researcher_mode: bool,
    pub practice: bool,
}

#[derive(Debug, Deserialize)]
struct ActionBody {
    action: HumanAction,
}

#[derive(Debug, Deserialize)]
struct ManualBody {
    completed: bool,
}

#[derive(Debug, Deserialize)]
struct CountBody {
    #[serde(default)]
    answer: Option<i64>,
    expected: i64,
    #[serde(default)]
    timed_out: bool,
}

#[derive(Debug, Deserialize)]
struct TrustBody {
    value: i64,
}

struct Inner {
    store: SessionStore,
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the data directory and replays every persisted session.
    pub fn open(config: ServiceConfig) -> Result<(Self, Vec<String>), StoreError> {
        let store = SessionStore::open(&config.data_dir)?;
        let mut warnings = Vec::new();
        let mut sessions = HashMap::new();
        for r in store.recover_all(&config.params)? {
            warnings.extend(r.warnings);
            sessions.insert(r.session.id().to_string(), Arc::new(Mutex::new(r.session)));
        }
        let state = AppState(Arc::new(Inner {
            store,
            config,
            sessions: RwLock::new(sessions),
        }));
        Ok((state, warnings))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.0.sessions.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>, ApiError> {
        self.0
            .sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }

    /// Persists a new session and registers it.
    pub fn create_session(&self, req: CreateSession) -> Result<SessionCreated, ApiError> {
        let defaults = &self.0.config;
        let mut env = defaults.default_env.clone();
        env.seed = req.seed.unwrap_or_else(rand::random);
        if let Some(n) = req.n_trials {
            env.n_trials = n;
        }
        if let Some(p) = req.success_probability {
            env.success_probability = p;
        }
        if let Some(p) = req.p_high_complexity {
            env.complexity = ComplexitySchedule::Iid { p_high: p };
        }
        let policy = match &req.policy {
            Some(name) => name.parse().map_err(ApiError::from_sim)?,
            None => defaults.default_policy.clone(),
        };
        let config = SessionConfig {
            session_id: format!("s-{:016x}", rand::random::<u64>()),
            env,
            policy,
            researcher_mode: req.researcher_mode,
            practice: req.practice,
            counting_time_limit_secs: req.counting_time_limit_secs.unwrap_or(defaults.counting_time_limit_secs),
        };
        let session = LiveSession::new(config.clone(), defaults.params.clone()).map_err(ApiError::from)?;
        self.0.store.create(&config).map_err(ApiError::from)?;
        self.0
            .sessions
            .write()
            .expect("registry lock")
            .insert(config.session_id.clone(), Arc::new(Mutex::new(session)));
        Ok(SessionCreated {
            session_id: config.session_id,
            n_trials: config.env.n_trials,
            researcher_mode: config.researcher_mode,
            practice: config.practice,
        })
    }

    /// Applies a command atomically: the new state is kept only once journaled.
    pub fn apply(&self, id: &str, command: &Command) -> Result<CommandResult, ApiError> {
        let handle = self.session(id)?;
        let mut guard = handle.lock().expect("session lock");
        let before = guard.log().len();
        let mut next = guard.clone();
        let result = next.apply(command)?;
        self.0.store.record(command, before, &next)?;
        *guard = next;
        Ok(result)
    }

    pub fn trial_view(&self, id: &str) -> Result<TrialView, ApiError> {
        Ok(self.session(id)?.lock().expect("session lock").trial_view()?)
    }

    pub fn estimate(&self, id: &str) -> Result<TrustEstimate, ApiError> {
        Ok(self.session(id)?.lock().expect("session lock").estimate()?)
    }

    pub fn export_log(&self, id: &str) -> Result<String, ApiError> {
        let handle = self.session(id)?;
        let session = handle.lock().expect("session lock");
        Ok(write_log_string(std::slice::from_ref(session.log())))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{status}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn from_sim(e: SimError) -> Self {
        SessionError::from(e).into()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::WrongPhase { .. } | SessionError::EstimateUnavailable(_) => StatusCode::CONFLICT,
            SessionError::NotResearcher => StatusCode::FORBIDDEN,
            SessionError::Simulation(SimError::ScriptExhausted { .. }) => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!("persistence failure: {e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

/// Lenient body parsing: no content-type required, empty means defaults.
fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    parse_required(body)
}

fn parse_required<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid request body: {e}")))
}

async fn create(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: CreateSession = parse_body(&body)?;
    Ok((StatusCode::CREATED, Json(state.create_session(req)?)))
}

async fn trial(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<TrialView>, ApiError> {
    Ok(Json(state.trial_view(&id)?))
}

async fn action(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<CommandResult>, ApiError> {
    s.session(&id)?;
    let b: ActionBody = parse_required(&body)?;
    Ok(Json(s.apply(&id, &Command::Action { action: b.action })?))
}

async fn manual(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<CommandResult>, ApiError> {
    s.session(&id)?;
    let b: ManualBody = parse_required(&body)?;
    Ok(Json(s.apply(&id, &Command::Manual { completed: b.completed })?))
}

async fn count(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<CommandResult>, ApiError> {
    s.session(&id)?;
    let b: CountBody = parse_required(&body)?;
    let command = Command::Count {
        answer: b.answer,
        expected: b.expected,
        timed_out: b.timed_out,
    };
    Ok(Json(s.apply(&id, &command)?))
}

async fn trust(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<CommandResult>, ApiError> {
    s.session(&id)?;
    let b: TrustBody = parse_required(&body)?;
    Ok(Json(s.apply(&id, &Command::Trust { value: b.value })?))
}

async fn estimate(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<TrustEstimate>, ApiError> {
    Ok(Json(state.estimate(&id)?))
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = state.export_log(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/trial", get(trial))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/manual", post(manual))
        .route("/sessions/{id}/count", post(count))
        .route("/sessions/{id}/trust", post(trust))
        .route("/sessions/{id}/estimate", get(estimate))
        .route("/sessions/{id}/log", get(export))
        .with_state(state)
}

/// Recovers persisted sessions and serves until interrupted.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> anyhow::Result<()> {
    let (state, warnings) = AppState::open(config)?;
    for w in warnings {
        tracing::warn!("{w}");
    }
    tracing::info!(sessions = state.session_ids().len(), "recovered sessions");
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
