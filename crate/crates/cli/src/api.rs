//! REST API over sessions. Every session response carries the session round,
//! which increases on each change of query, weights or tree cursor.
//!
//! Concurrency: sessions sit behind a read-write lock. Reads clone the session
//! (cheap, the heavy parts are shared) and compute outside the lock, so reads
//! never block reads. Mutations hold the write lock; `/train` computes on a
//! clone and commits only if the round did not move meanwhile.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query as UrlQuery, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use steerlsh_core::pipeline::TreeNode;
use steerlsh_core::sampling::{Prototype, TableSummary};
use steerlsh_core::series::{downsample_track, read_csv, OverviewPoint};
use steerlsh_core::{LabelSet, LshConfig, MultivariateTimeSeries, Query, RetrievalResult, Session};

use crate::error::ApiError;
use crate::store::{Store, DATASET_PREFIX, SESSION_PREFIX};

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Upper bound on request bodies (dataset uploads).
pub const MAX_BODY_BYTES: usize = 512 << 20;
/// Overview points returned when the request does not ask for a number.
pub const DEFAULT_OVERVIEW_POINTS: usize = 1000;

/// One live session plus its labelling state.
pub struct SessionSlot {
    session: RwLock<Session>,
    /// Labels collected since the last train.
    pending: Mutex<LabelSet>,
    training: AtomicBool,
}

impl SessionSlot {
    fn new(session: Session) -> Self {
        Self {
            session: RwLock::new(session),
            pending: Mutex::new(LabelSet::default()),
            training: AtomicBool::new(false),
        }
    }

    fn snapshot(&self) -> Session {
        self.session.read().expect("session lock").clone()
    }

    /// Claims the single training slot; released when the guard drops.
    fn begin_train(self: &Arc<Self>) -> ApiResult<TrainGuard> {
        self.training
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| ApiError::train_in_flight())?;
        Ok(TrainGuard(self.clone()))
    }
}

/// Holds a session's training slot.
pub struct TrainGuard(Arc<SessionSlot>);

impl Drop for TrainGuard {
    fn drop(&mut self) {
        self.0.training.store(false, Ordering::Release);
    }
}

/// Shared service state.
pub struct AppState {
    store: Store,
    datasets: RwLock<HashMap<String, Arc<MultivariateTimeSeries>>>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    next_dataset: AtomicU64,
    next_session: AtomicU64,
}

impl AppState {
    /// Ids continue after the largest one found on disk.
    pub fn new(store: Store) -> Self {
        let next_dataset = AtomicU64::new(store.max_id(DATASET_PREFIX) + 1);
        let next_session = AtomicU64::new(store.max_id(SESSION_PREFIX) + 1);
        Self { store, datasets: RwLock::default(), sessions: RwLock::default(), next_dataset, next_session }
    }

    fn dataset(&self, id: &str) -> ApiResult<Arc<MultivariateTimeSeries>> {
        if let Some(s) = self.datasets.read().expect("dataset lock").get(id) {
            return Ok(s.clone());
        }
        let series = Arc::new(self.store.load_dataset(id)?.ok_or_else(|| ApiError::not_found("dataset", id))?);
        Ok(self.datasets.write().expect("dataset lock").entry(id.to_string()).or_insert(series).clone())
    }

    /// Live session, or one resumed from its stored document.
    fn slot(&self, id: &str) -> ApiResult<Arc<SessionSlot>> {
        if let Some(s) = self.sessions.read().expect("session map lock").get(id) {
            return Ok(s.clone());
        }
        let doc = self.store.load_session(id)?.ok_or_else(|| ApiError::not_found("session", id))?;
        let series = self.dataset(&doc.dataset_id)?;
        let session = Session::restore(series, &doc)?;
        let slot = Arc::new(SessionSlot::new(session));
        Ok(self.sessions.write().expect("session map lock").entry(id.to_string()).or_insert(slot).clone())
    }

    fn persist(&self, id: &str, session: &Session) -> ApiResult<()> {
        Ok(self.store.save_session(id, &session.to_document())?)
    }

    /// Marks a session as busy for `/train`; exposed for fault-injection tests.
    pub fn claim_training(&self, session_id: &str) -> ApiResult<TrainGuard> {
        self.slot(session_id)?.begin_train()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}/overview", get(overview))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/query", post(set_query))
        .route("/sessions/{id}/results", get(results))
        .route("/sessions/{id}/tables", get(tables))
        .route("/sessions/{id}/samples", get(samples))
        .route("/sessions/{id}/labels", get(get_labels).post(post_labels))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/tree", get(get_tree).post(jump_tree))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn url_params<T>(params: Result<UrlQuery<T>, QueryRejection>) -> ApiResult<T> {
    params.map(|UrlQuery(p)| p).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn parse_json<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

// ---- datasets ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub n: usize,
    pub d: usize,
    pub track_names: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct UploadParams {
    /// First row holds track names; defaults to true.
    header: Option<bool>,
}

async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    params: Result<UrlQuery<UploadParams>, QueryRejection>,
    mut multipart: Multipart,
) -> ApiResult<impl IntoResponse> {
    let params = url_params(params)?;
    let field = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))?
        .ok_or_else(|| ApiError::bad_request("multipart body has no file field"))?;
    let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
    let has_header = params.header.unwrap_or(true);
    let info = blocking(move || {
        let series = read_csv(bytes.as_ref(), has_header)?;
        let id = format!("{DATASET_PREFIX}{}", state.next_dataset.fetch_add(1, Ordering::SeqCst));
        state.store.save_dataset(&id, &series)?;
        let info = DatasetInfo {
            dataset_id: id.clone(),
            n: series.len(),
            d: series.dims(),
            track_names: series.track_names().to_vec(),
        };
        state.datasets.write().expect("dataset lock").insert(id, Arc::new(series));
        Ok(info)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(info)))
}

#[derive(Debug, Deserialize)]
struct OverviewParams {
    /// Comma-separated track indices; empty or absent selects every track.
    tracks: Option<String>,
    points: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackOverview {
    pub track: usize,
    pub name: String,
    pub points: Vec<OverviewPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Overview {
    pub dataset_id: String,
    pub n: usize,
    pub tracks: Vec<TrackOverview>,
}

async fn overview(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    params: Result<UrlQuery<OverviewParams>, QueryRejection>,
) -> ApiResult<Json<Overview>> {
    let params = url_params(params)?;
    let series = state.dataset(&id)?;
    let tracks: Vec<usize> = match params.tracks.as_deref().map(str::trim) {
        None | Some("") => (0..series.dims()).collect(),
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| ApiError::bad_request(format!("bad track index {t:?}"))))
            .collect::<ApiResult<_>>()?,
    };
    let points = params.points.unwrap_or(DEFAULT_OVERVIEW_POINTS.min(series.len()));
    blocking(move || {
        let tracks = tracks
            .into_iter()
            .map(|track| {
                let points = downsample_track(&series, track, points)?;
                Ok(TrackOverview { track, name: series.track_names()[track].clone(), points })
            })
            .collect::<ApiResult<_>>()?;
        Ok(Json(Overview { dataset_id: id, n: series.len(), tracks }))
    })
    .await
}

// ---- sessions ----

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset_id: String,
    /// Window length.
    pub t: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub config: LshConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub round: u64,
    pub windows: usize,
    pub tracks: usize,
    pub model_fingerprint: String,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_json(&body)?;
    let series = state.dataset(&req.dataset_id)?;
    let created = blocking(move || {
        let session = Session::build(req.dataset_id.clone(), series, req.t, req.stride, req.config, req.seed)?;
        let id = format!("{SESSION_PREFIX}{}", state.next_session.fetch_add(1, Ordering::SeqCst));
        state.persist(&id, &session)?;
        let created = SessionCreated {
            session_id: id.clone(),
            round: session.round(),
            windows: session.windows().len(),
            tracks: session.series().dims(),
            model_fingerprint: session.model().fingerprint(),
        };
        state.sessions.write().expect("session map lock").insert(id, Arc::new(SessionSlot::new(session)));
        Ok(created)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

/// One ranked window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hit {
    pub window: usize,
    pub start: usize,
    pub score: f64,
}

/// Lossless projection of a retrieval result plus the state that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultView {
    pub session_id: String,
    pub round: u64,
    pub query_start: Option<usize>,
    pub query: Query,
    pub weight: Vec<f64>,
    pub expansions: usize,
    pub candidates: Vec<usize>,
    pub top_k: Vec<Hit>,
    pub scores: Vec<f64>,
    pub histogram: Vec<usize>,
    pub bin_prototypes: Vec<Option<Prototype>>,
    pub digest: String,
}

fn result_view(id: &str, session: &Session, result: &RetrievalResult) -> ApiResult<ResultView> {
    let windows = session.windows().windows();
    Ok(ResultView {
        session_id: id.to_string(),
        round: session.round(),
        query_start: session.query_start(),
        query: session.query().ok_or(steerlsh_core::Error::NoQuery)?.clone(),
        weight: session.model().weight().to_vec(),
        expansions: result.candidates.expansions,
        candidates: result.candidates.entries.iter().map(|e| e.window).collect(),
        top_k: result
            .top_k
            .iter()
            .map(|&w| Hit { window: w, start: windows[w].start, score: result.scores[w] })
            .collect(),
        scores: result.scores.clone(),
        histogram: result.histogram.clone(),
        bin_prototypes: result.bin_prototypes.clone(),
        digest: result.digest(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetQuery {
    pub start: usize,
}

async fn set_query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ResultView>> {
    let req: SetQuery = parse_json(&body)?;
    let slot = state.slot(&id)?;
    blocking(move || {
        let mut guard = slot.session.write().expect("session lock");
        let mut next = guard.clone();
        next.set_query(req.start)?;
        let result = next.run_query()?;
        state.persist(&id, &next)?;
        *slot.pending.lock().expect("pending lock") = LabelSet::default();
        *guard = next;
        Ok(Json(result_view(&id, &guard, &result)?))
    })
    .await
}

async fn results(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ResultView>> {
    let slot = state.slot(&id)?;
    blocking(move || {
        let mut session = slot.snapshot();
        let result = session.run_query()?;
        Ok(Json(result_view(&id, &session, &result)?))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TablesView {
    pub session_id: String,
    pub round: u64,
    pub tables: Vec<TableSummary>,
}

async fn tables(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<TablesView>> {
    let slot = state.slot(&id)?;
    blocking(move || {
        let mut session = slot.snapshot();
        let tables = session.tables()?;
        Ok(Json(TablesView { session_id: id, round: session.round(), tables }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct SampleParams {
    k: Option<usize>,
    explore: Option<usize>,
    /// Defaults to the session round, so repeated calls in one round agree.
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplesView {
    pub session_id: String,
    pub round: u64,
    pub exploit: Vec<Hit>,
    pub explore: Vec<Hit>,
}

async fn samples(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    params: Result<UrlQuery<SampleParams>, QueryRejection>,
) -> ApiResult<Json<SamplesView>> {
    let params = url_params(params)?;
    let slot = state.slot(&id)?;
    blocking(move || {
        let mut session = slot.snapshot();
        let seed = params.seed.unwrap_or(session.round());
        let set = session.samples(params.k.unwrap_or(3), params.explore.unwrap_or(5), seed)?;
        let result = session.run_query()?;
        let hits = |ws: &[usize]| {
            ws.iter()
                .map(|&w| Hit { window: w, start: session.windows().windows()[w].start, score: result.scores[w] })
                .collect()
        };
        Ok(Json(SamplesView {
            session_id: id,
            round: session.round(),
            exploit: hits(&set.exploit),
            explore: hits(&set.explore),
        }))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsView {
    pub session_id: String,
    pub round: u64,
    /// Labels that the next `/train` will use.
    pub pending: LabelSet,
    /// Labels of every round on the path from the tree root to the cursor.
    pub history: Vec<LabelSet>,
}

fn labels_view(id: String, slot: &SessionSlot) -> LabelsView {
    let session = slot.session.read().expect("session lock");
    LabelsView {
        session_id: id,
        round: session.round(),
        pending: slot.pending.lock().expect("pending lock").clone(),
        history: session.labels_by_round().to_vec(),
    }
}

async fn get_labels(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<LabelsView>> {
    let slot = state.slot(&id)?;
    Ok(Json(labels_view(id, &slot)))
}

/// Replaces the pending labels after checking every index.
async fn post_labels(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<LabelsView>> {
    let labels: LabelSet = parse_json(&body)?;
    let slot = state.slot(&id)?;
    {
        let session = slot.session.read().expect("session lock");
        labels.validate(session.windows().len(), session.model().num_tables())?;
    }
    *slot.pending.lock().expect("pending lock") = labels;
    Ok(Json(labels_view(id, &slot)))
}

/// One learning round from the pending labels. Synchronous: returns the new result.
async fn train(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ResultView>> {
    let slot = state.slot(&id)?;
    let guard = slot.begin_train()?;
    blocking(move || {
        let _guard = guard;
        let mut next = slot.snapshot();
        let start_round = next.round();
        let labels = slot.pending.lock().expect("pending lock").clone();
        let result = next.feedback_round(labels)?;
        let mut live = slot.session.write().expect("session lock");
        if live.round() != start_round {
            return Err(ApiError::session_changed());
        }
        state.persist(&id, &next)?;
        *live = next;
        *slot.pending.lock().expect("pending lock") = LabelSet::default();
        Ok(Json(result_view(&id, &live, &result)?))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeView {
    pub session_id: String,
    pub round: u64,
    pub cursor: Option<usize>,
    pub nodes: Vec<TreeNode>,
}

async fn get_tree(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<TreeView>> {
    let slot = state.slot(&id)?;
    let session = slot.snapshot();
    Ok(Json(TreeView {
        session_id: id,
        round: session.round(),
        cursor: session.tree().map(|t| t.cursor()),
        nodes: session.tree().map(|t| t.nodes().to_vec()).unwrap_or_default(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpTree {
    pub node: usize,
}

/// Moves the cursor to `node` and reinstates its weights and query.
async fn jump_tree(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ResultView>> {
    let req: JumpTree = parse_json(&body)?;
    let slot = state.slot(&id)?;
    blocking(move || {
        let mut guard = slot.session.write().expect("session lock");
        let mut next = guard.clone();
        let result = next.undo_redo(req.node)?;
        state.persist(&id, &next)?;
        *slot.pending.lock().expect("pending lock") = LabelSet::default();
        *guard = next;
        Ok(Json(result_view(&id, &guard, &result)?))
    })
    .await
}
