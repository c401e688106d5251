//! HTTP API over a loaded knowledge base, plus static hosting for the browser UI.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use aop_smart_core::bench::{
    self, generate_questions, load_benchmark, BenchOptions, BenchmarkQuestion, BenchmarkReport,
};
use aop_smart_core::kb::{load_resources, StoreError};
use aop_smart_core::llm::{ApiKey, GatewayError, LlmClient, LlmConfig, API_KEY_ENV};
use aop_smart_core::pipeline::{self, Mode, PipelineError, QueryRequest, DEFAULT_TOP_N};
use aop_smart_core::{KeIndex, KnowledgeBase};
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub const DEFAULT_BODY_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Directory holding `Index.txt` and `AOP-Smart.json`.
    pub kb_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    /// Question file for bench jobs; generated from the KB when absent.
    pub questions: Option<PathBuf>,
    pub default_endpoint: Option<String>,
    pub default_model: Option<String>,
    pub max_body_bytes: usize,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot load knowledge resources: {0}")]
    Resources(#[from] StoreError),
    #[error("cannot load benchmark questions: {0}")]
    Questions(#[from] bench::BenchError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

enum JobState {
    Running,
    Done(Box<BenchmarkReport>),
    Failed(String),
}

#[derive(Default)]
struct Jobs {
    next: u64,
    active: Option<String>,
    states: HashMap<String, JobState>,
}

struct AppState {
    kb: KnowledgeBase,
    index: KeIndex,
    questions: Vec<BenchmarkQuestion>,
    client: LlmClient,
    default_endpoint: Option<String>,
    default_model: Option<String>,
    jobs: Mutex<Jobs>,
}

type Shared = Arc<AppState>;

#[derive(Debug, Serialize)]
struct ErrorBody {
    kind: String,
    message: String,
}

struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            kind: "validation",
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(
                json!({"error": ErrorBody { kind: self.kind.to_string(), message: self.message }}),
            ),
        )
            .into_response()
    }
}

fn gateway_error(err: &GatewayError, context: &str) -> ApiError {
    let kind = err.kind();
    let status = match kind {
        aop_smart_core::llm::GatewayErrorKind::Credential => StatusCode::UNAUTHORIZED,
        aop_smart_core::llm::GatewayErrorKind::RetryableOverload => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::BAD_GATEWAY,
    };
    let kind = match kind {
        aop_smart_core::llm::GatewayErrorKind::Network => "network",
        aop_smart_core::llm::GatewayErrorKind::Credential => "credential",
        aop_smart_core::llm::GatewayErrorKind::Protocol => "protocol",
        aop_smart_core::llm::GatewayErrorKind::RetryableOverload => "retryable_overload",
    };
    ApiError {
        status,
        kind,
        message: format!("{context}: {err}"),
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::InvalidRequest(m) => ApiError::validation(m.clone()),
            PipelineError::Gateway { stage, source } => gateway_error(source, &stage.to_string()),
            _ => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                kind: "internal",
                message: e.to_string(),
            },
        }
    }
}

/// Connection settings shared by the model, query and bench routes.
#[derive(Debug, Default, Deserialize)]
struct BackendFields {
    #[serde(default)]
    endpoint: Option<String>,
    #[serde(default)]
    api_key: Option<String>,
    #[serde(default)]
    model_id: Option<String>,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    max_output_tokens: Option<u32>,
}

impl AppState {
    fn config(&self, f: &BackendFields, need_model: bool) -> Result<LlmConfig, ApiError> {
        let endpoint = f
            .endpoint
            .clone()
            .filter(|e| !e.trim().is_empty())
            .or_else(|| self.default_endpoint.clone())
            .ok_or_else(|| ApiError::validation("endpoint is required"))?;
        // Per-request key first; the server environment is only a fallback.
        let key = f
            .api_key
            .clone()
            .filter(|k| !k.is_empty())
            .or_else(|| std::env::var(API_KEY_ENV).ok())
            .unwrap_or_default();
        let model = f
            .model_id
            .clone()
            .filter(|m| !m.trim().is_empty())
            .or_else(|| self.default_model.clone());
        if need_model && model.is_none() {
            return Err(ApiError::validation("model_id is required"));
        }
        let mut cfg = LlmConfig::new(&endpoint, ApiKey::new(key), model.unwrap_or_default())
            .map_err(|e| ApiError::validation(e.to_string()))?;
        if let Some(t) = f.temperature {
            cfg = cfg
                .with_temperature(t)
                .map_err(|e| ApiError::validation(e.to_string()))?;
        }
        if let Some(m) = f.max_output_tokens {
            cfg = cfg
                .with_max_output_tokens(m)
                .map_err(|e| ApiError::validation(e.to_string()))?;
        }
        Ok(cfg)
    }
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "ke_count": state.kb.ke_count(),
        "ker_count": state.kb.ker_count(),
        "aop_count": state.kb.aop_count(),
        "snapshot_date": state.kb.source_snapshot_date(),
    }))
}

async fn models(
    State(state): State<Shared>,
    Json(body): Json<BackendFields>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let cfg = state.config(&body, false)?;
    let models = state
        .client
        .fetch_models(&cfg)
        .await
        .map_err(|e| gateway_error(&e, "fetch models"))?;
    Ok(Json(json!({ "models": models })))
}

#[derive(Debug, Deserialize)]
struct QueryBody {
    #[serde(flatten)]
    backend: BackendFields,
    #[serde(default)]
    question: String,
    #[serde(default)]
    mode: Option<Mode>,
    #[serde(default)]
    top_n: Option<usize>,
}

async fn query(
    State(state): State<Shared>,
    Json(body): Json<QueryBody>,
) -> Result<Json<pipeline::Answer>, ApiError> {
    let request = QueryRequest::new(
        body.question.clone(),
        body.top_n.unwrap_or(DEFAULT_TOP_N),
        body.mode.unwrap_or(Mode::Rag),
    )?;
    let cfg = state.config(&body.backend, true)?;
    let answer = pipeline::answer(
        &state.client,
        &cfg,
        Some((&state.kb, &state.index)),
        &request,
    )
    .await?;
    Ok(Json(answer))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BenchMode {
    Baseline,
    Rag,
    Both,
}

#[derive(Debug, Deserialize)]
struct BenchBody {
    #[serde(flatten)]
    backend: BackendFields,
    mode: BenchMode,
    #[serde(default)]
    top_n: Option<usize>,
}

async fn bench_run(
    State(state): State<Shared>,
    Json(body): Json<BenchBody>,
) -> Result<Response, ApiError> {
    let cfg = state.config(&body.backend, true)?;
    let options = BenchOptions {
        top_n: body.top_n.unwrap_or(DEFAULT_TOP_N),
        temperature: body.backend.temperature.unwrap_or(0.0),
        ..BenchOptions::default()
    };
    if options.top_n == 0 {
        return Err(ApiError::validation("top_n must be at least 1"));
    }
    let modes = match body.mode {
        BenchMode::Baseline => vec![Mode::Baseline],
        BenchMode::Rag => vec![Mode::Rag],
        BenchMode::Both => vec![Mode::Baseline, Mode::Rag],
    };

    let job_id = {
        let mut jobs = state.jobs.lock().expect("job table poisoned");
        if let Some(active) = &jobs.active {
            return Err(ApiError {
                status: StatusCode::CONFLICT,
                kind: "busy",
                message: format!("benchmark job {active} is still running"),
            });
        }
        jobs.next += 1;
        let id = format!("job-{}", jobs.next);
        jobs.active = Some(id.clone());
        jobs.states.insert(id.clone(), JobState::Running);
        id
    };

    let task_state = state.clone();
    let task_id = job_id.clone();
    tokio::spawn(async move {
        let s = &task_state;
        let mut merged: Option<BenchmarkReport> = None;
        let mut failure = None;
        for mode in modes {
            match bench::run_benchmark(
                &s.client,
                &cfg,
                &s.kb,
                &s.index,
                &s.questions,
                mode,
                options,
            )
            .await
            {
                Ok(r) => {
                    merged = Some(match merged.take() {
                        Some(m) => m.merge(r),
                        None => r,
                    })
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        let mut jobs = s.jobs.lock().expect("job table poisoned");
        let outcome = match (failure, merged) {
            (None, Some(r)) => JobState::Done(Box::new(r)),
            (Some(e), _) => JobState::Failed(e),
            (None, None) => JobState::Failed("no modes were run".into()),
        };
        jobs.states.insert(task_id, outcome);
        jobs.active = None;
    });

    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))).into_response())
}

async fn bench_status(
    State(state): State<Shared>,
    Path(job): Path<String>,
) -> Result<Response, ApiError> {
    let jobs = state.jobs.lock().expect("job table poisoned");
    match jobs.states.get(&job) {
        None => Err(ApiError {
            status: StatusCode::NOT_FOUND,
            kind: "not_found",
            message: format!("no benchmark job {job}"),
        }),
        Some(JobState::Running) => Ok((
            StatusCode::ACCEPTED,
            Json(json!({"job_id": job, "status": "running"})),
        )
            .into_response()),
        Some(JobState::Done(report)) => Ok(Json(report.as_ref().clone()).into_response()),
        Some(JobState::Failed(message)) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "bench_failed",
            message: message.clone(),
        }),
    }
}

fn router(state: Shared, static_dir: Option<&PathBuf>, body_limit: usize) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/models", post(models))
        .route("/api/query", post(query))
        .route("/api/bench/run", post(bench_run))
        .route("/api/bench/{job}", get(bench_status))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// A running service. Stops when [`RunningService::shutdown`] is called or the
/// handle is dropped.
pub struct RunningService {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    /// Serves until the process receives Ctrl-C.
    pub async fn wait(mut self) -> std::io::Result<()> {
        let stop = self.shutdown.take();
        tokio::select! {
            r = &mut self.task => r.unwrap_or(Ok(())),
            _ = tokio::signal::ctrl_c() => {
                if let Some(tx) = stop {
                    let _ = tx.send(());
                }
                (&mut self.task).await.unwrap_or(Ok(()))
            }
        }
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Loads resources once, binds the listener and starts serving. Refuses to
/// start when the knowledge directory does not validate.
pub async fn serve(config: ServiceConfig) -> Result<RunningService, ServeError> {
    let (kb, index) = load_resources(&config.kb_dir)?;
    let questions = match &config.questions {
        Some(path) => load_benchmark(path, &kb)?,
        None => generate_questions(&kb, 5),
    };
    let state = Arc::new(AppState {
        kb,
        index,
        questions,
        client: LlmClient::new(),
        default_endpoint: config.default_endpoint.clone(),
        default_model: config.default_model.clone(),
        jobs: Mutex::new(Jobs::default()),
    });
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind {
        addr: config.listen,
        source,
    })?;
    let app = router(state, config.static_dir.as_ref(), config.max_body_bytes);
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, "service listening");
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        task,
    })
}
