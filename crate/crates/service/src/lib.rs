//! JSON-over-HTTP session API: a person takes the simulator's place and
//! answers each selected example with one `(primitive, label)` LF.
//!
//! | method | path                           | body / query                 |
//! |--------|--------------------------------|------------------------------|
//! | POST   | `/sessions`                    | session config (JSON)        |
//! | GET    | `/sessions/{id}/next`          |                              |
//! | POST   | `/sessions/{id}/lf`            | `{primitive, label}` or `{skip: true}` |
//! | GET    | `/sessions/{id}/explore`       | `?primitive=&limit=`         |
//! | GET    | `/sessions/{id}/state`         |                              |
//!
//! Gold labels never leave the server.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use idp_core::config::Mode;
use idp_core::lf::LfRecord;
use idp_core::session::{CurvePoint, SessionState};
use idp_core::{Corpus, IterationReport, Label, Session, SessionConfig};

/// Environment variable holding the listen address.
pub const LISTEN_ENV: &str = "IDP_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
const DEFAULT_EXPLORE_LIMIT: usize = 10;
const CURVE_TAIL: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<idp_core::Error> for ApiError {
    fn from(e: idp_core::Error) -> Self {
        use idp_core::Error as E;
        let msg = e.to_string();
        match e {
            E::PendingResponse(_) | E::NoPendingExample | E::SessionComplete => ApiError::Conflict(msg),
            E::PrimitiveNotInExample { .. } => ApiError::Unprocessable(msg),
            E::UnknownPrimitive(_) => ApiError::NotFound(msg),
            E::Config(_) | E::TooFewExamples { .. } => ApiError::BadRequest(msg),
            _ => ApiError::Internal(msg),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::Unprocessable(r.body_text())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if let ApiError::Internal(m) = &self {
            tracing::error!("{m}");
        }
        (self.status(), Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Datasets available to new sessions plus the live sessions.
#[derive(Clone, Default)]
pub struct AppState {
    datasets: Arc<HashMap<String, Arc<Corpus>>>,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
}

impl AppState {
    pub fn new(datasets: HashMap<String, Arc<Corpus>>) -> Self {
        AppState {
            datasets: Arc::new(datasets),
            sessions: Arc::default(),
        }
    }

    pub fn dataset_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.datasets.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    /// Direct handle on a live session, for replay and inspection.
    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().expect("session table poisoned").get(id).cloned()
    }

    fn lookup(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.session(id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown session {id:?}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_example))
        .route("/sessions/{id}/lf", post(submit_lf))
        .route("/sessions/{id}/explore", get(explore))
        .route("/sessions/{id}/state", get(session_state))
        .with_state(state)
}

/// Binds `addr` (or `$IDP_LISTEN`, or the default) and serves until the
/// process is stopped.
pub async fn serve(state: AppState, addr: Option<SocketAddr>) -> std::io::Result<()> {
    let addr = match addr {
        Some(a) => a,
        None => listen_addr()?,
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, datasets = ?state.dataset_names(), "serving");
    axum::serve(listener, router(state)).await
}

pub fn listen_addr() -> std::io::Result<SocketAddr> {
    let raw = std::env::var(LISTEN_ENV).unwrap_or_else(|_| DEFAULT_LISTEN.to_string());
    raw.parse().map_err(|e| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{LISTEN_ENV}={raw:?}: {e}"))
    })
}

/// Runs `f` on the session off the async runtime; requests on one session
/// queue on its mutex.
async fn with_session<T, F>(state: &AppState, id: &str, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
{
    let session = state.lookup(id)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = session.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

/// An example as shown to a person: never carries the gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePayload {
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Candidate primitives, in primitive-id order.
    pub primitives: Vec<String>,
}

fn example_payload(session: &Session, id: usize) -> ExamplePayload {
    let corpus = session.corpus();
    let x = corpus.example(id);
    ExamplePayload {
        id,
        text: x.text.clone(),
        primitives: corpus.primitive_names(x),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub state: SessionState,
    pub mode: Mode,
    pub dataset: String,
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<serde_json::Value>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(value) = body?;
    let config: SessionConfig =
        serde_json::from_value(value).map_err(|e| ApiError::BadRequest(format!("config: {e}")))?;
    config.validate()?;
    let name = config.dataset.name.clone();
    let corpus = state.datasets.get(&name).cloned().ok_or_else(|| {
        ApiError::BadRequest(format!(
            "dataset.name: unknown dataset {name:?}; available: {:?}",
            state.dataset_names()
        ))
    })?;
    let mode = config.run.mode;
    let session = tokio::task::spawn_blocking(move || Session::new(corpus, config))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created = Created {
        session_id: id.clone(),
        state: session.state(),
        mode,
        dataset: name,
    };
    state
        .sessions
        .write()
        .expect("session table poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextPayload {
    pub state: SessionState,
    /// Iteration the answer will complete (1-based).
    pub iteration: usize,
    pub example: Option<ExamplePayload>,
}

async fn next_example(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<NextPayload>> {
    with_session(&state, &id, |s| {
        if s.config().run.mode != Mode::Human {
            return Err(ApiError::Conflict(
                "session runs in simulated mode; create it with run.mode = \"human\"".into(),
            ));
        }
        match s.next_example() {
            Ok(x) => Ok(Json(NextPayload {
                state: s.state(),
                iteration: s.iteration() + 1,
                example: Some(example_payload(s, x)),
            })),
            Err(idp_core::Error::SessionComplete) => Ok(Json(NextPayload {
                state: SessionState::Complete,
                iteration: s.iteration(),
                example: None,
            })),
            Err(e) => Err(e.into()),
        }
    })
    .await
}

/// Body of `POST /sessions/{id}/lf`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LfRequest {
    Lf { primitive: String, label: Label },
    Skip { skip: bool },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitPayload {
    pub state: SessionState,
    pub report: IterationReport,
    pub curve_tail: Vec<CurvePoint>,
}

async fn submit_lf(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<LfRequest>, JsonRejection>,
) -> ApiResult<Json<SubmitPayload>> {
    let Json(request) = body?;
    with_session(&state, &id, move |s| {
        let report = match request {
            LfRequest::Lf { primitive, label } => s.submit(&primitive, label)?,
            LfRequest::Skip { skip: true } => s.skip()?,
            LfRequest::Skip { skip: false } => {
                return Err(ApiError::Unprocessable("expected {primitive, label} or {skip: true}".into()))
            }
        };
        let curve = s.curve();
        Ok(Json(SubmitPayload {
            state: s.state(),
            report,
            curve_tail: curve[curve.len().saturating_sub(CURVE_TAIL)..].to_vec(),
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ExploreQuery {
    primitive: String,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplorePayload {
    pub primitive: String,
    pub examples: Vec<ExamplePayload>,
}

async fn explore(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExploreQuery>,
) -> ApiResult<Json<ExplorePayload>> {
    with_session(&state, &id, move |s| {
        let ids = s.explore(&q.primitive, q.limit.unwrap_or(DEFAULT_EXPLORE_LIMIT))?;
        Ok(Json(ExplorePayload {
            examples: ids.into_iter().map(|i| example_payload(s, i)).collect(),
            primitive: q.primitive,
        }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatePayload {
    pub session_id: String,
    pub state: SessionState,
    pub mode: Mode,
    pub iteration: usize,
    pub percentile: f64,
    pub lfs: Vec<LfRecord>,
    pub curve: Vec<CurvePoint>,
    pub pending: Option<ExamplePayload>,
    pub pool_remaining: usize,
}

async fn session_state(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StatePayload>> {
    let session_id = id.clone();
    with_session(&state, &id, move |s| {
        Ok(Json(StatePayload {
            session_id,
            state: s.state(),
            mode: s.config().run.mode,
            iteration: s.iteration(),
            percentile: s.percentile(),
            lfs: s.lfs().iter().map(|l| l.to_record(s.corpus())).collect(),
            curve: s.curve().to_vec(),
            pending: s.pending().map(|x| example_payload(s, x)),
            pool_remaining: s.pool().len(),
        }))
    })
    .await
}
