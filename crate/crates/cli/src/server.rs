//! HTTP service for interactive editing sessions.
//!
//! Every session holds its assets, classification, plan and last composed
//! latent behind its own lock. Mutating calls take the lock exclusively, so
//! requests to one session are serialized and each returns the revision it
//! produced. Work runs on the blocking pool since backend calls block.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chimera_core::layout::{execute_plan, AssembledSkeleton, AssemblyPlan, EditOp, LayoutError};
use chimera_core::voxel::{compose, ComposedLatent, DenseCoarseGrid};
use chimera_gateway::{AssetBundle, BundleWire, Gateway, GatewayError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::sha256_hex;
use crate::config::{AssetSource, Backends, ComposerParams};
use crate::engine::{self, occupancy_rle, seam_report, ClassificationRecord, LoadedAsset};
use crate::EngineError;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub violations: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), violations: Vec::new() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn rejected(violations: Vec<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: "plan rejected".into(), violations }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Gateway(g) => g.into(),
            EngineError::Layout(LayoutError::PlanRejected(v)) => Self::rejected(v),
            other => Self::bad_request(other.to_string()),
        }
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let status = match &e {
            GatewayError::BackendUnavailable { timed_out: true, .. } => StatusCode::GATEWAY_TIMEOUT,
            GatewayError::BackendUnavailable { .. }
            | GatewayError::MalformedResponse(_)
            | GatewayError::StructureViolation(_) => StatusCode::BAD_GATEWAY,
            GatewayError::PlanRejected(v) => return Self::rejected(v.clone()),
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl From<LayoutError> for ApiError {
    fn from(e: LayoutError) -> Self {
        EngineError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if !self.violations.is_empty() {
            body["violations"] = json!(self.violations);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

#[derive(Debug, Default)]
struct Session {
    revision: u64,
    assets: Vec<(String, AssetBundle)>,
    classified: Option<Vec<LoadedAsset>>,
    plan: Option<AssemblyPlan>,
    assembled: Option<AssembledSkeleton>,
    composed: Option<ComposedLatent>,
}

impl Session {
    fn bump(&mut self) -> u64 {
        self.revision += 1;
        self.revision
    }

    fn classified(&self) -> ApiResult<&[LoadedAsset]> {
        self.classified.as_deref().ok_or_else(|| ApiError::bad_request("assets are not classified yet"))
    }

    fn assembled(&self) -> ApiResult<&AssembledSkeleton> {
        self.assembled.as_ref().ok_or_else(|| ApiError::bad_request("no plan yet"))
    }

    /// Stores a plan after executing it, dropping the stale composition.
    fn set_plan(&mut self, plan: AssemblyPlan) -> ApiResult<u64> {
        let assembled = execute_plan(&plan, &engine::classified(self.classified()?))?;
        self.plan = Some(plan);
        self.assembled = Some(assembled);
        self.composed = None;
        Ok(self.bump())
    }
}

struct Artifact {
    content_type: &'static str,
    bytes: Vec<u8>,
}

pub struct AppState {
    backends: Backends,
    composer: ComposerParams,
    gateway: Gateway,
    next_id: AtomicU64,
    sessions: RwLock<HashMap<String, Arc<RwLock<Session>>>>,
    artifacts: RwLock<HashMap<String, Artifact>>,
}

impl AppState {
    pub fn new(backends: Backends, composer: ComposerParams, gateway: Gateway) -> Self {
        Self {
            backends,
            composer,
            gateway,
            next_id: AtomicU64::new(1),
            sessions: RwLock::new(HashMap::new()),
            artifacts: RwLock::new(HashMap::new()),
        }
    }

    fn session(&self, id: &str) -> ApiResult<Arc<RwLock<Session>>> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id:?}")))
    }

    /// Stores bytes under their hash and returns it.
    fn put_artifact(&self, content_type: &'static str, bytes: Vec<u8>) -> String {
        let hash = sha256_hex(&bytes);
        self.artifacts.write().expect("artifact lock").entry(hash.clone()).or_insert(Artifact { content_type, bytes });
        hash
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/assets", post(add_asset))
        .route("/sessions/{id}/classify", post(classify))
        .route("/sessions/{id}/plan", post(plan))
        .route("/sessions/{id}/ops", post(apply_op))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/compose", post(compose_session))
        .route("/sessions/{id}/style", post(style))
        .route("/artifacts/{hash}", get(artifact))
        .with_state(state)
}

pub async fn serve(addr: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))
}

/// Runs `f` on the blocking pool with the session locked for writing.
async fn mutate<F>(state: Arc<AppState>, id: String, f: F) -> ApiResult
where
    F: FnOnce(&AppState, &mut Session) -> ApiResult<Value> + Send + 'static,
{
    let session = state.session(&id)?;
    blocking(move || {
        let mut s = session.write().expect("session lock");
        f(&state, &mut s).map(Json)
    })
    .await
}

async fn read<F>(state: Arc<AppState>, id: String, f: F) -> ApiResult
where
    F: FnOnce(&AppState, &Session) -> ApiResult<Value> + Send + 'static,
{
    let session = state.session(&id)?;
    blocking(move || {
        let s = session.read().expect("session lock");
        f(&state, &s).map(Json)
    })
    .await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

async fn create_session(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    state.sessions.write().expect("session table lock").insert(id.clone(), Arc::default());
    (StatusCode::CREATED, Json(json!({ "id": id, "revision": 0 })))
}

/// One of `fixture`, `prompt` or `bundle`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetUpload {
    id: Option<String>,
    fixture: Option<String>,
    prompt: Option<String>,
    bundle: Option<BundleWire>,
}

async fn add_asset(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let up: AssetUpload = parse(&body)?;
    mutate(state, id, move |st, s| {
        let source = match (up.fixture, up.prompt, &up.bundle) {
            (Some(f), None, None) => Some(AssetSource::Fixture(f)),
            (None, Some(p), None) => Some(AssetSource::Prompt(p)),
            (None, None, Some(_)) => None,
            _ => return Err(ApiError::bad_request("give exactly one of fixture, prompt or bundle")),
        };
        let index = s.assets.len();
        let name =
            up.id.unwrap_or_else(|| source.as_ref().map_or(format!("asset{index}"), |src| src.default_id(index)));
        if name.is_empty() || name.contains(['/', '#']) || s.assets.iter().any(|(n, _)| *n == name) {
            return Err(ApiError::bad_request(format!("asset id {name:?} is invalid or taken")));
        }
        let bundle = match (source, up.bundle) {
            (Some(src), _) => engine::load_bundle(&src, &st.gateway, &st.backends)?,
            (None, Some(w)) => AssetBundle::from_wire(w)?,
            (None, None) => unreachable!("checked above"),
        };
        bundle.validate().map_err(EngineError::from)?;
        s.assets.push((name, bundle));
        s.classified = None;
        s.plan = None;
        s.assembled = None;
        s.composed = None;
        let ids: Vec<&str> = s.assets.iter().map(|(n, _)| n.as_str()).collect();
        let ids = json!(ids);
        Ok(json!({ "revision": s.bump(), "assets": ids }))
    })
    .await
}

async fn classify(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    mutate(state, id, |st, s| {
        if s.assets.is_empty() {
            return Err(ApiError::bad_request("session has no assets"));
        }
        let loaded = s
            .assets
            .iter()
            .map(|(n, b)| engine::classify(n, b.clone(), st.composer.prune_fraction))
            .collect::<Result<Vec<_>, _>>()?;
        let partitions: Vec<ClassificationRecord> =
            loaded.iter().map(|a| ClassificationRecord::of(&a.classified)).collect();
        s.classified = Some(loaded);
        s.plan = None;
        s.assembled = None;
        s.composed = None;
        Ok(json!({ "revision": s.bump(), "partitions": partitions }))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanBody {
    request: Option<String>,
    plan: Option<AssemblyPlan>,
}

async fn plan(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: PlanBody = parse(&body)?;
    mutate(state, id, move |st, s| {
        let plan = match (body.request, body.plan) {
            (Some(r), None) => engine::plan(s.classified()?, &r, &st.gateway, &st.backends)?,
            (None, Some(p)) => p,
            _ => return Err(ApiError::bad_request("give exactly one of request or plan")),
        };
        let revision = s.set_plan(plan)?;
        Ok(json!({ "revision": revision, "plan": s.plan, "skeleton": s.assembled()?.skeleton }))
    })
    .await
}

async fn apply_op(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let op: EditOp = parse(&body)?;
    mutate(state, id, move |_, s| {
        let mut plan = s.plan.clone().ok_or_else(|| ApiError::bad_request("no plan yet"))?;
        plan.ops.push(op);
        let revision = s.set_plan(plan)?;
        Ok(json!({ "revision": revision, "skeleton": s.assembled()?.skeleton }))
    })
    .await
}

#[derive(Serialize)]
struct Occupancy {
    resolution: u16,
    rle: Vec<[u32; 2]>,
}

impl Occupancy {
    fn of(g: &DenseCoarseGrid) -> Self {
        Self { resolution: g.resolution, rle: occupancy_rle(g) }
    }
}

async fn preview(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    read(state, id, |st, s| {
        let assembled = s.assembled()?;
        let occupancy = match &s.composed {
            Some(c) => Occupancy::of(&c.grid),
            None => Occupancy::of(&engine::compose_assembly(s.classified()?, assembled, &st.composer)?.grid),
        };
        Ok(json!({ "revision": s.revision, "skeleton": assembled.skeleton, "occupancy": occupancy }))
    })
    .await
}

fn compose_current(st: &AppState, s: &Session) -> ApiResult<ComposedLatent> {
    let inputs = engine::compose_inputs(s.classified()?, s.assembled()?, &st.composer)?;
    compose(&inputs, &st.composer.compose_config()).map_err(|e| EngineError::from(e).into())
}

async fn compose_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    mutate(state, id, |st, s| {
        let composed = compose_current(st, s)?;
        let seams = seam_report(&composed, s.assembled()?);
        let hash = st.put_artifact("application/octet-stream", composed.latent.to_slat());
        s.composed = Some(composed);
        Ok(json!({
            "revision": s.bump(),
            "artifact": hash,
            "url": format!("/artifacts/{hash}"),
            "seams": seams,
        }))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StyleBody {
    style: String,
    negative: Option<String>,
}

async fn style(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: StyleBody = parse(&body)?;
    mutate(state, id, move |st, s| {
        if st.backends.image_edit.is_fixture() {
            return Err(ApiError::bad_request("no image-editing backend configured"));
        }
        let composed = match s.composed.take() {
            Some(c) => c,
            None => compose_current(st, s)?,
        };
        let r = engine::restyle(&composed.latent, &body.style, body.negative.as_deref(), &st.gateway, &st.backends);
        s.composed = Some(composed);
        let r = r?;
        let png = |img: &chimera_gateway::RgbaImage| img.to_png().map_err(EngineError::from);
        let reference = st.put_artifact("image/png", png(&r.reference)?);
        let edited = st.put_artifact("image/png", png(&r.edited)?);
        let latent = st.put_artifact("application/octet-stream", r.latent.to_slat());
        Ok(json!({ "revision": s.bump(), "reference": reference, "edited": edited, "artifact": latent }))
    })
    .await
}

async fn artifact(State(state): State<Arc<AppState>>, Path(hash): Path<String>) -> Result<Response, ApiError> {
    let store = state.artifacts.read().expect("artifact lock");
    let a = store.get(&hash).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no artifact {hash}")))?;
    Ok(([(header::CONTENT_TYPE, a.content_type)], a.bytes.clone()).into_response())
}
