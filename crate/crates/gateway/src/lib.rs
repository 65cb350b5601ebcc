//! Contracts for the neural and remote services behind the pipeline:
//! text-to-3D generation, auto-rigging, LLM planning, image editing and
//! second-stage latent regeneration.
//!
//! Every backend is either an HTTP endpoint speaking JSON or an offline
//! fixture (`fixture:<name>`). Fixtures are deterministic, so whole
//! pipeline runs can be tested without model weights.

mod bundle;
mod config;
mod image;
pub mod transport;

pub use bundle::{fixture_bundle, AssetBundle, BundleWire, Mesh};
pub use config::{
    BackendConfig, Endpoint, Service, DEFAULT_GUIDANCE_SCALE, DEFAULT_SAMPLING_STEPS, DEFAULT_TIMEOUT_SECS,
    GEN3D_ENDPOINT_VAR, IMGEDIT_ENDPOINT_VAR, LLM_API_KEY_VAR, LLM_ENDPOINT_VAR,
};
pub use image::RgbaImage;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chimera_core::layout::{plan_assembly, validate_plan, AssemblyPlan, ClassifiedAsset, LayoutError, PlannerRequest};
use chimera_core::region::SkinningMatrix;
use chimera_core::skeleton::Skeleton;
use chimera_core::voxel::{Position, SparseLatent};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use transport::{HttpTransport, Transport, TransportError};

/// Negative prompt used when the caller gives none. Written for this
/// project; not taken from any published prompt set.
pub const DEFAULT_NEGATIVE_PROMPT: &str = "blurry, washed out, mismatched textures, visible seams";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend {endpoint} unavailable: {detail}")]
    BackendUnavailable { endpoint: String, timed_out: bool, detail: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("plan rejected: {}", .0.join("; "))]
    PlanRejected(Vec<String>),
    #[error("backend changed the voxel structure: {0}")]
    StructureViolation(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("no fixture named {0:?}")]
    UnknownFixture(String),
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

impl GatewayError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, GatewayError::BackendUnavailable { timed_out: true, .. })
    }
}

/// Image edit request: the reference image plus style prompts. Extra
/// backend parameters pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub image: RgbaImage,
    pub positive_prompt: String,
    pub negative_prompt: String,
    #[serde(default)]
    pub extra_params: BTreeMap<String, Value>,
}

/// Recorded planner responses replayed by `fixture:<name>` planner configs.
const RECORDED_PLANS: &[(&str, &str)] = &[
    ("quadruped-wings", include_str!("../fixtures/plans/quadruped-wings.json")),
    ("quadruped-ram-head", include_str!("../fixtures/plans/quadruped-ram-head.json")),
];

/// Name of the planner fixture that runs the built-in rule planner.
pub const RULE_PLANNER: &str = "rule";

pub fn recorded_plan(name: &str) -> Option<&'static str> {
    RECORDED_PLANS.iter().find(|(n, _)| *n == name).map(|(_, p)| *p)
}

struct NoTransport;

impl Transport for NoTransport {
    fn post_json(
        &self,
        url: &str,
        _: &Value,
        _: Option<&str>,
        _: std::time::Duration,
    ) -> Result<Value, TransportError> {
        Err(TransportError::Unreachable(format!("{url}: networking disabled")))
    }
}

/// Entry point for every backend call. Cheap to clone and safe to share
/// between threads; each call carries its own timeout.
#[derive(Clone)]
pub struct Gateway {
    transport: Arc<dyn Transport>,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport }
    }

    /// Gateway with a real HTTP client.
    pub fn http() -> Result<Self> {
        let t = HttpTransport::new().map_err(|e| unavailable("http client", e))?;
        Ok(Self::new(Arc::new(t)))
    }

    /// Gateway that only serves fixtures; remote configs fail as unavailable.
    pub fn offline() -> Self {
        Self::new(Arc::new(NoTransport))
    }

    fn post(&self, cfg: &BackendConfig, route: &str, body: &Value) -> Result<Value> {
        let Endpoint::Http(base) = &cfg.endpoint else {
            unreachable!("fixture configs never reach the transport");
        };
        let url = format!("{base}/{route}");
        log::debug!("POST {url}");
        let key = cfg.api_key();
        self.transport.post_json(&url, body, key.as_deref(), cfg.timeout()).map_err(|e| match e {
            TransportError::BadResponse(m) => GatewayError::MalformedResponse(m),
            other => unavailable(base, other),
        })
    }

    pub fn generate_asset(&self, prompt: &str, cfg: &BackendConfig) -> Result<AssetBundle> {
        cfg.validate()?;
        if prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        log::info!("generate_asset via {}", cfg.endpoint);
        if let Endpoint::Fixture(name) = &cfg.endpoint {
            return fixture_bundle(name);
        }
        let body = json!({
            "prompt": prompt,
            "guidance_scale": cfg.guidance_scale,
            "sampling_steps": cfg.sampling_steps,
        });
        let resp = self.post(cfg, "generate", &body)?;
        let wire: BundleWire = parse(resp, "bundle")?;
        AssetBundle::from_wire(wire)
    }

    /// Skeleton and skinning weights for a mesh. Rows summing above one are
    /// rescaled on ingest.
    pub fn rig_asset(&self, mesh: &Mesh, cfg: &BackendConfig) -> Result<(Skeleton, SkinningMatrix)> {
        cfg.validate()?;
        mesh.validate()?;
        log::info!("rig_asset via {}", cfg.endpoint);
        let (skeleton, skinning) = if let Endpoint::Fixture(name) = &cfg.endpoint {
            let b = fixture_bundle(name)?;
            (b.skeleton, b.skinning)
        } else {
            #[derive(Deserialize)]
            struct RigWire {
                skeleton: Skeleton,
                skinning: String,
            }
            let (vertices, faces) = mesh.wire();
            let resp = self.post(cfg, "rig", &json!({ "vertices": vertices, "faces": faces }))?;
            let w: RigWire = parse(resp, "rig")?;
            (w.skeleton, bundle::decode_musw(&w.skinning)?)
        };
        if skinning.vertex_count() != mesh.vertices.len() {
            return Err(GatewayError::MalformedResponse(format!(
                "rig has {} skinning rows for {} vertices",
                skinning.vertex_count(),
                mesh.vertices.len()
            )));
        }
        if skinning.joint_count() != skeleton.joint_count() {
            return Err(GatewayError::MalformedResponse(format!(
                "rig has {} skinning columns for {} joints",
                skinning.joint_count(),
                skeleton.joint_count()
            )));
        }
        Ok((skeleton, skinning))
    }

    /// Plan for the request, validated against `assets` before it is
    /// returned. `fixture:rule` runs the rule planner; other fixture names
    /// replay a recorded response.
    pub fn plan_ops(
        &self,
        request: &PlannerRequest,
        assets: &[ClassifiedAsset],
        cfg: &BackendConfig,
    ) -> Result<AssemblyPlan> {
        cfg.validate()?;
        log::info!("plan_ops via {}", cfg.endpoint);
        let plan = match &cfg.endpoint {
            Endpoint::Fixture(name) if name == RULE_PLANNER => match plan_assembly(assets, &request.request) {
                Ok(p) => p,
                Err(LayoutError::PlanRejected(v)) => return Err(GatewayError::PlanRejected(v)),
                Err(e) => return Err(GatewayError::InvalidRequest(e.to_string())),
            },
            Endpoint::Fixture(name) => {
                let text = recorded_plan(name).ok_or_else(|| GatewayError::UnknownFixture(name.clone()))?;
                parse_plan(serde_json::from_str(text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?)?
            }
            Endpoint::Http(_) => {
                let body = serde_json::to_value(request).expect("requests serialize");
                parse_plan(self.post(cfg, "plan", &body)?)?
            }
        };
        let violations = validate_plan(&plan, assets);
        if !violations.is_empty() {
            return Err(GatewayError::PlanRejected(violations));
        }
        Ok(plan)
    }

    /// Style edit of a reference image. The fixture returns the input.
    pub fn edit_image(&self, req: &EditRequest, cfg: &BackendConfig) -> Result<RgbaImage> {
        cfg.validate()?;
        req.image.validate()?;
        log::info!("edit_image via {}", cfg.endpoint);
        if cfg.is_fixture() {
            return Ok(req.image.clone());
        }
        let body = json!({
            "image": B64.encode(req.image.to_png()?),
            "positive_prompt": req.positive_prompt,
            "negative_prompt": req.negative_prompt,
            "extra_params": req.extra_params,
            "guidance_scale": cfg.guidance_scale,
            "sampling_steps": cfg.sampling_steps,
        });
        let resp = self.post(cfg, "edit", &body)?;
        let png = resp
            .get("image")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::MalformedResponse("edit response without \"image\"".into()))?;
        let bytes = B64.decode(png).map_err(|e| GatewayError::MalformedResponse(format!("image base64: {e}")))?;
        RgbaImage::from_png(&bytes)
    }

    /// New features for exactly `positions`, conditioned on `image`. The
    /// result lists voxels in the order given.
    pub fn regenerate_features(
        &self,
        image: &RgbaImage,
        positions: &[Position],
        resolution: u16,
        channels: u16,
        cfg: &BackendConfig,
    ) -> Result<SparseLatent> {
        cfg.validate()?;
        image.validate()?;
        let wanted: BTreeSet<Position> = positions.iter().copied().collect();
        if wanted.len() != positions.len() {
            return Err(GatewayError::InvalidRequest("duplicate voxel positions".into()));
        }
        if positions.iter().flatten().any(|&c| c >= resolution) {
            return Err(GatewayError::InvalidRequest(format!("position outside the {resolution}³ grid")));
        }
        log::info!("regenerate_features via {}", cfg.endpoint);
        let invalid = |e: chimera_core::voxel::VoxelError| GatewayError::InvalidRequest(e.to_string());
        if cfg.is_fixture() {
            let features = pseudo_features(image, positions, channels);
            return SparseLatent::new(resolution, channels, positions.to_vec(), features).map_err(invalid);
        }
        let body = json!({
            "image": B64.encode(image.to_png()?),
            "positions": positions,
            "resolution": resolution,
            "channels": channels,
            "guidance_scale": cfg.guidance_scale,
            "sampling_steps": cfg.sampling_steps,
        });
        let resp = self.post(cfg, "regenerate", &body)?;
        let slat = resp
            .get("slat")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::MalformedResponse("regenerate response without \"slat\"".into()))?;
        let z = bundle::decode_slat(slat)?;
        if z.resolution() != resolution || z.channels() != channels {
            return Err(GatewayError::MalformedResponse(format!(
                "latent is {}³×{}, expected {resolution}³×{channels}",
                z.resolution(),
                z.channels()
            )));
        }
        let got: BTreeSet<Position> = z.positions().iter().copied().collect();
        if got != wanted {
            let extra = got.difference(&wanted).count();
            let missing = wanted.difference(&got).count();
            return Err(GatewayError::StructureViolation(format!("{extra} added and {missing} missing voxels")));
        }
        let index: BTreeMap<Position, usize> = z.positions().iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let order: Vec<usize> = positions.iter().map(|p| index[p]).collect();
        Ok(z.select(&order))
    }
}

fn unavailable(endpoint: &str, e: TransportError) -> GatewayError {
    let (timed_out, detail) = match e {
        TransportError::Timeout(m) => (true, m),
        TransportError::Unreachable(m) | TransportError::Status(m) | TransportError::BadResponse(m) => (false, m),
    };
    GatewayError::BackendUnavailable { endpoint: endpoint.to_string(), timed_out, detail }
}

fn parse<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| GatewayError::MalformedResponse(format!("{what}: {e}")))
}

fn parse_plan(v: Value) -> Result<AssemblyPlan> {
    for field in ["parts", "ops", "attach"] {
        if v.get(field).is_none() {
            return Err(GatewayError::MalformedResponse(format!("plan without {field:?}")));
        }
    }
    parse(v, "plan")
}

/// Deterministic features in `[-1, 1)` from the image digest and voxel
/// position.
fn pseudo_features(image: &RgbaImage, positions: &[Position], channels: u16) -> Vec<f32> {
    let mut h = Sha256::new();
    h.update(image.width.to_le_bytes());
    h.update(image.height.to_le_bytes());
    h.update(&image.pixels);
    let digest = h.finalize();
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
    let mut out = Vec::with_capacity(positions.len() * channels as usize);
    for p in positions {
        let key = (p[0] as u64) << 32 | (p[1] as u64) << 16 | p[2] as u64;
        for k in 0..channels as u64 {
            let x = splitmix(seed ^ splitmix(key.wrapping_mul(0x9e37_79b9) ^ k));
            out.push(((x >> 40) as f32) / (1u64 << 23) as f32 - 1.0);
        }
    }
    out
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
