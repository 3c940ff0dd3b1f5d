//! HTTP API for the ask, review and feedback loop.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use nl2sql_core::generator::{gen_sql_queries, GeneratorError};
use nl2sql_core::llm::{ensure_entities, LlmBackend, LlmError};
use nl2sql_core::personalizer::{schema_map, FeedbackEvent, Hint, HintEvent, HintStore, PersonalizerError};
use nl2sql_core::selector::{score_candidates, ConformalModel, SelectorError};
use nl2sql_core::similarity::SimilarityProvider;
use nl2sql_core::sql::Database;
use nl2sql_core::{Ident, MaskedSchema, PipelineConfig, Question, SqlCandidate};

use crate::config::{build_backend, ServiceConfig};
use crate::formats::{load_database, CalibrationArtifact, FormatError};
use crate::journal::Journal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Resolved,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    pub db_id: Ident,
    pub question: Question,
    pub shown: Vec<SqlCandidate>,
    pub status: SessionStatus,
    /// Set when resolved; `None` on a resolved session means none was correct.
    #[serde(default)]
    pub chosen: Option<String>,
    pub created_at: u64,
    #[serde(default)]
    pub resolved_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SessionEvent {
    Open(Session),
    Resolve { session_id: String, chosen: Option<String>, ts: u64 },
}

#[derive(Debug, Default)]
struct Inner {
    store: HintStore,
    sessions: BTreeMap<String, Session>,
    next_session: u64,
}

impl Inner {
    fn apply_session(&mut self, event: SessionEvent) {
        match event {
            SessionEvent::Open(s) => {
                if let Some(n) = s.session_id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                    self.next_session = self.next_session.max(n);
                }
                self.store.register_session(s.session_id.clone());
                self.sessions.insert(s.session_id.clone(), s);
            }
            SessionEvent::Resolve { session_id, chosen, ts } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    s.status = SessionStatus::Resolved;
                    s.chosen = chosen;
                    s.resolved_at = Some(ts);
                }
            }
        }
    }
}

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

pub struct AppState {
    pub backend: Arc<dyn LlmBackend>,
    pub provider: SimilarityProvider,
    pub databases: BTreeMap<Ident, Arc<Database>>,
    pub calibration: Option<CalibrationArtifact>,
    pub alpha_profiles: BTreeMap<String, f64>,
    pub pipeline: PipelineConfig,
    pub selector_enabled: bool,
    pub clock: Clock,
    hint_journal: Option<Journal<HintEvent>>,
    session_journal: Option<Journal<SessionEvent>>,
    inner: Mutex<Inner>,
}

impl AppState {
    pub fn new(
        backend: Arc<dyn LlmBackend>,
        provider: SimilarityProvider,
        databases: impl IntoIterator<Item = Database>,
        pipeline: PipelineConfig,
    ) -> Self {
        AppState {
            backend,
            provider,
            databases: databases.into_iter().map(|d| (d.schema().db_id.clone(), Arc::new(d))).collect(),
            calibration: None,
            alpha_profiles: BTreeMap::new(),
            pipeline,
            selector_enabled: false,
            clock: system_clock(),
            hint_journal: None,
            session_journal: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn with_calibration(mut self, artifact: CalibrationArtifact) -> Self {
        self.calibration = Some(artifact);
        self.selector_enabled = true;
        self
    }

    /// Attaches journals and replays whatever they already hold.
    pub fn with_journals(
        mut self,
        hints: Option<Journal<HintEvent>>,
        sessions: Option<Journal<SessionEvent>>,
    ) -> Result<Self, FormatError> {
        let threshold = self.lock().store.match_threshold;
        let mut inner = Inner::default();
        if let Some(j) = &hints {
            inner.store = HintStore::replay(j.read()?);
        }
        inner.store.match_threshold = threshold;
        if let Some(j) = &sessions {
            for e in j.read()? {
                inner.apply_session(e);
            }
        }
        self.inner = Mutex::new(inner);
        self.hint_journal = hints;
        self.session_journal = sessions;
        Ok(self)
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, FormatError> {
        let (backend, provider) = build_backend(&config.backend, config.similarity_default)?;
        let dbs = config.databases.iter().map(|p| load_database(p)).collect::<Result<Vec<_>, _>>()?;
        let mut state = AppState::new(backend, provider, dbs, config.pipeline.clone());
        state.lock().store.match_threshold = config.match_threshold;
        if let Some(path) = &config.calibration {
            state = state.with_calibration(CalibrationArtifact::load(path)?);
        }
        state.selector_enabled = config.selector_enabled;
        state.alpha_profiles = config.alpha_profiles.clone();
        state.with_journals(
            config.hint_journal.as_ref().map(Journal::new),
            config.session_journal.as_ref().map(Journal::new),
        )
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn session(&self, id: &str) -> Option<Session> {
        self.lock().sessions.get(id).cloned()
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn err(status: StatusCode, m: impl ToString) -> ApiError {
    ApiError(status, m.to_string())
}

fn backend_error(e: LlmError) -> ApiError {
    match e {
        LlmError::InvalidOracle(_) => err(StatusCode::INTERNAL_SERVER_ERROR, e),
        _ => err(StatusCode::BAD_GATEWAY, e),
    }
}

impl From<GeneratorError> for ApiError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Backend(b) => backend_error(b),
            other => err(StatusCode::UNPROCESSABLE_ENTITY, other),
        }
    }
}

impl From<SelectorError> for ApiError {
    fn from(e: SelectorError) -> Self {
        match e {
            SelectorError::Backend(b) => backend_error(b),
            other => err(StatusCode::INTERNAL_SERVER_ERROR, other),
        }
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        err(StatusCode::INTERNAL_SERVER_ERROR, e)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct AskRequest {
    pub user_id: String,
    pub db_id: String,
    pub question: String,
    #[serde(default)]
    pub k: Option<u32>,
    #[serde(default)]
    pub alpha_profile: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub entity: String,
    pub column: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub id: String,
    pub sql: String,
    /// Nonconformity score; lower is better.
    pub score: Option<f64>,
    /// `1 - score`, for display.
    pub confidence: Option<f64>,
    pub explanation: Vec<Mapping>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub session_id: String,
    pub candidates: Vec<CandidateView>,
    pub no_confident_candidate: bool,
    pub hints_used: Vec<String>,
    pub llm_calls: u32,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FeedbackRequest {
    pub session_id: String,
    /// Omitted or null when no candidate was correct.
    #[serde(default)]
    pub chosen_candidate_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub hints_created: Vec<Hint>,
}

#[derive(Debug, Deserialize)]
pub struct HintQuery {
    pub user_id: String,
}

struct Generated {
    question: Question,
    shown: Vec<SqlCandidate>,
    hints: Vec<Hint>,
    llm_calls: u32,
    selected: bool,
}

fn generate(state: &AppState, req: &AskRequest, db: &Database, k: u32, model: Option<&ConformalModel>) -> Result<Generated, ApiError> {
    let mut question = Question::new(req.question.clone(), req.user_id.clone(), req.db_id.as_str())
        .map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let schema = Arc::new(db.schema().clone());
    let hints = if state.pipeline.personalization_enabled {
        let entities = ensure_entities(state.backend.as_ref(), &mut question).map_err(backend_error)?;
        state.lock().store.hints_for(&state.provider, &req.user_id, &entities)
    } else {
        Vec::new()
    };
    let trace = gen_sql_queries(state.backend.as_ref(), &state.provider, schema.clone(), &mut question, k, &hints)?;
    let mut candidates = trace.candidates;
    let scoring = model.map_or(state.pipeline.scoring, |m| m.scoring);
    score_candidates(
        scoring,
        true,
        state.backend.as_ref(),
        &state.provider,
        &question,
        &MaskedSchema::full(schema),
        &mut candidates,
        &hints,
    )?;
    let shown = match model {
        Some(m) => {
            let keep = m.select(&candidates);
            candidates.into_iter().filter(|c| keep.contains(&c.id)).collect()
        }
        None => candidates,
    };
    Ok(Generated { question, shown, hints, llm_calls: trace.llm_calls, selected: model.is_some() })
}

fn explain(state: &AppState, question: &Question, sql: &str, db: &Database) -> Vec<Mapping> {
    let entities = question.entities.clone().unwrap_or_default();
    entities
        .iter()
        .filter_map(|e| {
            schema_map(&state.provider, e, sql, db.schema()).ok().map(|(col, s)| Mapping {
                entity: e.phrase.clone(),
                column: col.to_string(),
                similarity: s,
            })
        })
        .collect()
}

async fn ask(State(state): State<Arc<AppState>>, Json(req): Json<AskRequest>) -> Result<Json<AskResponse>, ApiError> {
    let db = state
        .databases
        .get(&Ident::from(req.db_id.as_str()))
        .cloned()
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown db_id `{}`", req.db_id)))?;
    let k = req.k.unwrap_or(state.pipeline.max_calls);
    if k == 0 {
        return Err(err(StatusCode::UNPROCESSABLE_ENTITY, "k must be at least 1"));
    }
    let model = if state.selector_enabled {
        let artifact = state.calibration.as_ref().ok_or_else(|| err(StatusCode::CONFLICT, "selector enabled but no calibration loaded"))?;
        Some(match &req.alpha_profile {
            None => artifact.model(),
            Some(p) => {
                let alpha = *state
                    .alpha_profiles
                    .get(p)
                    .ok_or_else(|| err(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown alpha profile `{p}`")))?;
                artifact.model_at(alpha)?
            }
        })
    } else {
        None
    };

    let st = state.clone();
    let (req, db, g) = tokio::task::spawn_blocking(move || {
        let g = generate(&st, &req, &db, k, model.as_ref());
        (req, db, g)
    })
    .await
    .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    let g = g?;

    let candidates = g
        .shown
        .iter()
        .map(|c| CandidateView {
            id: c.id.clone(),
            sql: c.sql_text.clone(),
            score: c.score,
            confidence: c.score.map(|s| 1.0 - s),
            explanation: explain(&state, &g.question, &c.sql_text, &db),
        })
        .collect();
    let now = (state.clock)();
    let mut inner = state.lock();
    inner.next_session += 1;
    let session = Session {
        session_id: format!("s{}", inner.next_session),
        user_id: req.user_id.clone(),
        db_id: req.db_id.as_str().into(),
        question: g.question,
        shown: g.shown,
        status: SessionStatus::Open,
        chosen: None,
        created_at: now,
        resolved_at: None,
    };
    let event = SessionEvent::Open(session.clone());
    if let Some(j) = &state.session_journal {
        j.append(std::slice::from_ref(&event))?;
    }
    inner.apply_session(event);
    Ok(Json(AskResponse {
        session_id: session.session_id,
        no_confident_candidate: g.selected && session.shown.is_empty(),
        candidates,
        hints_used: g.hints.into_iter().map(|h| h.text).collect(),
        llm_calls: g.llm_calls,
    }))
}

async fn feedback(
    State(state): State<Arc<AppState>>,
    Json(req): Json<FeedbackRequest>,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let now = (state.clock)();
    let mut inner = state.lock();
    let session = inner
        .sessions
        .get(&req.session_id)
        .cloned()
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown session `{}`", req.session_id)))?;
    if session.status != SessionStatus::Open {
        return Err(err(StatusCode::CONFLICT, "session already resolved"));
    }
    if let Some(id) = &req.chosen_candidate_id {
        if !session.shown.iter().any(|c| &c.id == id) {
            return Err(err(StatusCode::UNPROCESSABLE_ENTITY, format!("candidate `{id}` was not shown in this session")));
        }
    }
    let db = state.databases.get(&session.db_id).cloned().ok_or_else(|| err(StatusCode::NOT_FOUND, "database gone"))?;
    let event = FeedbackEvent {
        session_id: session.session_id.clone(),
        question: session.question.clone(),
        shown: session.shown.clone(),
        chosen: req.chosen_candidate_id.clone(),
    };
    let mut scratch = inner.store.clone();
    let (hints, events) = scratch.apply_feedback(&state.provider, &event, db.schema(), now).map_err(|e| match e {
        PersonalizerError::SessionUnknown(_) => err(StatusCode::NOT_FOUND, e),
        PersonalizerError::UnknownCandidate(_) => err(StatusCode::UNPROCESSABLE_ENTITY, e),
        other => err(StatusCode::INTERNAL_SERVER_ERROR, other),
    })?;
    let resolve = SessionEvent::Resolve { session_id: session.session_id, chosen: req.chosen_candidate_id, ts: now };
    if let Some(j) = &state.hint_journal {
        j.append(&events)?;
    }
    if let Some(j) = &state.session_journal {
        j.append(std::slice::from_ref(&resolve))?;
    }
    inner.store = scratch;
    inner.apply_session(resolve);
    Ok(Json(FeedbackResponse { hints_created: hints }))
}

async fn list_hints(State(state): State<Arc<AppState>>, Query(q): Query<HintQuery>) -> Json<Vec<Hint>> {
    Json(state.lock().store.active(&q.user_id))
}

async fn delete_hint(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let now = (state.clock)();
    let mut inner = state.lock();
    let mut scratch = inner.store.clone();
    let event = scratch.delete(&id, now).map_err(|e| err(StatusCode::NOT_FOUND, e))?;
    if let Some(j) = &state.hint_journal {
        j.append(&[event])?;
    }
    inner.store = scratch;
    Ok(StatusCode::NO_CONTENT)
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/feedback", post(feedback))
        .route("/hints", get(list_hints))
        .route("/hints/{id}", delete(delete_hint))
        .route("/health", get(health))
        .with_state(state)
}

pub async fn serve(config: &ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(config)?);
    let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
