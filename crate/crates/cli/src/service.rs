//! JSON API for the browser game: reference protocols, server-side simulation and the
//! leaderboard.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use num_complex::Complex64;
use qmoves_core::propagation::UnitaryBank;
use qmoves_core::{Protocol, ProtocolKind};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{OwnedSemaphorePermit, Semaphore};
use tower_http::services::ServeDir;

use crate::error::CliError;
use crate::lab::{Endpoints, Lab, Simulation};
use crate::scores::{validate_name, ScoreBook, ScoreEntry, Source, Submission};

/// Least-recently-used cache of step banks keyed by `(T, N)`, bounded by the bytes of
/// their phase tables. The spectral factorizations themselves are shared by all banks.
pub struct BankCache {
    budget: usize,
    tick: u64,
    entries: Vec<CachedBank>,
}

struct CachedBank {
    key: (u64, usize),
    bank: Arc<UnitaryBank>,
    bytes: usize,
    used: u64,
}

impl BankCache {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            tick: 0,
            entries: Vec::new(),
        }
    }

    /// Upper bound on a bank's phase tables.
    pub fn bank_bytes(lattice_len: usize, grid_len: usize) -> usize {
        lattice_len * grid_len * std::mem::size_of::<Complex64>()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.entries.iter().map(|e| e.bytes).sum()
    }

    pub fn contains(&self, duration: f64, steps: usize) -> bool {
        self.entries
            .iter()
            .any(|e| e.key == (duration.to_bits(), steps))
    }

    /// Cached bank for `(T, N)`, created with `make` on a miss. A bank larger than the
    /// whole budget is handed out without being cached.
    pub fn get_or_insert(
        &mut self,
        duration: f64,
        steps: usize,
        bytes: usize,
        make: impl FnOnce() -> Result<UnitaryBank, CliError>,
    ) -> Result<Arc<UnitaryBank>, CliError> {
        self.tick += 1;
        let key = (duration.to_bits(), steps);
        if let Some(e) = self.entries.iter_mut().find(|e| e.key == key) {
            e.used = self.tick;
            return Ok(Arc::clone(&e.bank));
        }
        let bank = Arc::new(make()?);
        if bytes > self.budget {
            return Ok(bank);
        }
        while self.bytes() + bytes > self.budget {
            let oldest = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.used)
                .map(|(i, _)| i)
                .expect("over budget implies entries");
            self.entries.swap_remove(oldest);
        }
        self.entries.push(CachedBank {
            key,
            bank: Arc::clone(&bank),
            bytes,
            used: self.tick,
        });
        Ok(bank)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    reason: String,
}

impl ApiError {
    fn invalid(reason: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "invalid_request",
            reason: reason.into(),
        }
    }

    fn overloaded() -> Self {
        Self {
            status: StatusCode::TOO_MANY_REQUESTS,
            code: "overloaded",
            reason: "all simulation slots are busy".into(),
        }
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Config(reason) => Self::invalid(reason),
            CliError::Numeric(reason) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                code: "simulation_failed",
                reason,
            },
            CliError::Io { .. } => Self {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                code: "internal",
                reason: e.to_string(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.code, "reason": self.reason }));
        if self.status == StatusCode::TOO_MANY_REQUESTS {
            (self.status, [(header::RETRY_AFTER, "1")], body).into_response()
        } else {
            (self.status, body).into_response()
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    lab: Arc<Lab>,
    banks: Mutex<BankCache>,
    references: Mutex<HashMap<(ProtocolKind, u64), ReferenceResponse>>,
    scores: ScoreBook,
    permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(lab: Lab, state_dir: &Path) -> Result<Arc<Self>, CliError> {
        let service = lab.config().service.clone();
        Ok(Arc::new(Self {
            banks: Mutex::new(BankCache::new(service.bank_cache_bytes)),
            references: Mutex::new(HashMap::new()),
            scores: ScoreBook::open(state_dir)?,
            permits: Arc::new(Semaphore::new(service.max_concurrent)),
            lab: Arc::new(lab),
        }))
    }

    pub fn lab(&self) -> &Lab {
        &self.lab
    }

    pub fn scores(&self) -> &ScoreBook {
        &self.scores
    }

    pub fn cached_banks(&self) -> usize {
        self.banks.lock().expect("bank cache lock").len()
    }

    /// Takes a simulation slot if one is free; requests beyond the free slots get 429.
    pub fn reserve_slot(&self) -> Option<OwnedSemaphorePermit> {
        Arc::clone(&self.permits).try_acquire_owned().ok()
    }

    fn permit(&self) -> ApiResult<OwnedSemaphorePermit> {
        Arc::clone(&self.permits)
            .try_acquire_owned()
            .map_err(|_| ApiError::overloaded())
    }

    /// Checks request limits and returns the step count for `T`.
    fn admit(&self, duration: f64, samples: usize) -> ApiResult<usize> {
        let limits = &self.lab.config().service;
        if !(duration > 0.0 && duration <= limits.max_duration) {
            return Err(ApiError::invalid(format!(
                "T must lie in (0, {}], got {duration}",
                limits.max_duration
            )));
        }
        if samples > limits.max_samples {
            return Err(ApiError::invalid(format!(
                "more than {} samples",
                limits.max_samples
            )));
        }
        let steps = self.lab.steps_for(duration, None)?;
        if steps > limits.max_steps {
            return Err(ApiError::invalid(format!(
                "{steps} steps exceed the limit {}",
                limits.max_steps
            )));
        }
        Ok(steps)
    }

    fn bank(&self, duration: f64, steps: usize) -> ApiResult<Arc<UnitaryBank>> {
        let bytes = BankCache::bank_bytes(
            self.lab.lattice().len(),
            self.lab.config().physics.grid_points,
        );
        let mut cache = self.banks.lock().expect("bank cache lock");
        Ok(cache.get_or_insert(duration, steps, bytes, || self.lab.bank(duration, steps))?)
    }

    /// Simulates `protocol` on a cached bank, off the async workers.
    async fn simulate(self: &Arc<Self>, protocol: Protocol, frames: bool) -> ApiResult<Simulation> {
        let steps = self.admit(protocol.duration(), protocol.len())?;
        let permit = self.permit()?;
        let state = Arc::clone(self);
        run_blocking(move || {
            let _permit = permit;
            let bank = state.bank(protocol.duration(), steps)?;
            Ok(state
                .lab
                .simulate_with(&protocol, steps, &bank, Endpoints::Transport, frames)?)
        })
        .await
    }
}

async fn run_blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        reason: e.to_string(),
    })?
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("malformed request: {e}")))
}

fn to_protocol(duration: f64, samples: &[[f64; 2]]) -> ApiResult<Protocol> {
    let value = json!({ "T": duration, "samples": samples, "kind": ProtocolKind::Human });
    Ok(Protocol::from_json(value).map_err(CliError::from)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    #[serde(rename = "T")]
    duration: f64,
    samples: Vec<[f64; 2]>,
    #[serde(default)]
    frames: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRequest {
    name: String,
    #[serde(rename = "T")]
    duration: f64,
    protocol: Vec<[f64; 2]>,
    #[serde(default)]
    source: Source,
    /// Accepted for compatibility and ignored: the server recomputes it.
    #[serde(default)]
    #[allow(dead_code)]
    fidelity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceQuery {
    kind: String,
    #[serde(rename = "T")]
    duration: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoresQuery {
    #[serde(rename = "T")]
    duration: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceResponse {
    pub kind: ProtocolKind,
    #[serde(rename = "T")]
    pub duration: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    pub fidelity: f64,
    pub samples: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct ScoreList {
    scores: Vec<ScoreEntry>,
}

async fn get_config(State(state): State<Arc<AppState>>) -> Json<qmoves_core::PhysicsConfig> {
    Json(state.lab.config().physics.clone())
}

async fn get_reference(
    State(state): State<Arc<AppState>>,
    query: Result<Query<ReferenceQuery>, QueryRejection>,
) -> ApiResult<Json<ReferenceResponse>> {
    let Query(q) = query.map_err(|e| ApiError::invalid(e.body_text()))?;
    let kind: ProtocolKind = q.kind.parse().map_err(CliError::from)?;
    if kind == ProtocolKind::Human {
        return Err(ApiError::invalid("human protocols have no reference"));
    }
    state.admit(q.duration, 0)?;
    let key = (kind, q.duration.to_bits());
    if let Some(hit) = state.references.lock().expect("reference lock").get(&key) {
        return Ok(Json(hit.clone()));
    }
    let permit = state.permit()?;
    let inner = Arc::clone(&state);
    let response = run_blocking(move || {
        let _permit = permit;
        let (protocol, sim) = inner.lab.reference(kind, q.duration)?;
        Ok(ReferenceResponse {
            kind,
            duration: q.duration,
            steps: sim.steps,
            fidelity: sim.fidelity,
            samples: protocol
                .times()
                .iter()
                .zip(protocol.positions())
                .map(|(&t, &x)| [t, x])
                .collect(),
        })
    })
    .await?;
    let mut cache = state.references.lock().expect("reference lock");
    if cache.len() >= 256 {
        cache.clear();
    }
    cache.insert(key, response.clone());
    Ok(Json(response))
}

async fn post_simulate(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<Json<Simulation>> {
    let req: SimulateRequest = parse_body(&body)?;
    let protocol = to_protocol(req.duration, &req.samples)?;
    Ok(Json(state.simulate(protocol, req.frames).await?))
}

async fn post_score(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<ScoreEntry>)> {
    let req: ScoreRequest = parse_body(&body)?;
    let name = validate_name(&req.name)?;
    let protocol = to_protocol(req.duration, &req.protocol)?;
    let sim = state.simulate(protocol, false).await?;
    let protocol_json =
        serde_json::to_string(&json!({ "T": req.duration, "samples": req.protocol }))
            .expect("samples serialize");
    let entry = state
        .scores
        .append(Submission {
            name,
            duration: req.duration,
            fidelity: sim.fidelity,
            source: req.source,
            protocol_json,
        })
        .await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn get_scores(
    State(state): State<Arc<AppState>>,
    query: Result<Query<ScoresQuery>, QueryRejection>,
) -> ApiResult<Json<ScoreList>> {
    let Query(q) = query.map_err(|e| ApiError::invalid(e.body_text()))?;
    Ok(Json(ScoreList {
        scores: state.scores.list(q.duration),
    }))
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        reason: "no such endpoint".into(),
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/config", get(get_config))
        .route("/api/reference", get(get_reference))
        .route("/api/simulate", axum::routing::post(post_simulate))
        .route("/api/scores", get(get_scores).post(post_score))
        .route("/api/{*rest}", axum::routing::any(not_found));
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    };
    app.with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
