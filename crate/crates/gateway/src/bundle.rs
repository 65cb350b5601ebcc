use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chimera_core::region::SkinningMatrix;
use chimera_core::skeleton::Skeleton;
use chimera_core::templates::{synthesize, CreatureTemplate, TemplateKind};
use chimera_core::voxel::{SparseLatent, DEFAULT_CHANNELS, DEFAULT_RESOLUTION};
use chimera_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::{GatewayError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(GatewayError::InvalidRequest("mesh has no vertices".into()));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GatewayError::InvalidRequest("mesh has a non-finite vertex".into()));
        }
        let n = self.vertices.len() as u32;
        if self.faces.iter().flatten().any(|&i| i >= n) {
            return Err(GatewayError::InvalidRequest("face index out of range".into()));
        }
        Ok(())
    }

    pub(crate) fn wire(&self) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
        (self.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(), self.faces.clone())
    }
}

/// A generated asset: mesh, rig and latent.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetBundle {
    pub mesh: Mesh,
    pub skeleton: Skeleton,
    pub skinning: SkinningMatrix,
    pub slat: SparseLatent,
    pub prompt: String,
}

/// JSON form. Skinning and latent travel as base64 MUSW and SLAT bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleWire {
    pub prompt: String,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub skeleton: Skeleton,
    pub skinning: String,
    pub slat: String,
}

impl AssetBundle {
    pub fn validate(&self) -> Result<()> {
        self.mesh.validate().map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        if self.skinning.vertex_count() != self.mesh.vertices.len() {
            return Err(GatewayError::MalformedResponse(format!(
                "skinning has {} rows for {} vertices",
                self.skinning.vertex_count(),
                self.mesh.vertices.len()
            )));
        }
        if self.skinning.joint_count() != self.skeleton.joint_count() {
            return Err(GatewayError::MalformedResponse(format!(
                "skinning has {} columns for {} joints",
                self.skinning.joint_count(),
                self.skeleton.joint_count()
            )));
        }
        Ok(())
    }

    pub fn to_wire(&self) -> BundleWire {
        let (vertices, faces) = self.mesh.wire();
        BundleWire {
            prompt: self.prompt.clone(),
            vertices,
            faces,
            skeleton: self.skeleton.clone(),
            skinning: B64.encode(self.skinning.to_musw()),
            slat: B64.encode(self.slat.to_slat()),
        }
    }

    pub fn from_wire(w: BundleWire) -> Result<Self> {
        let bad = |m: String| GatewayError::MalformedResponse(m);
        let skinning = decode_musw(&w.skinning)?;
        let slat = decode_slat(&w.slat)?;
        let mesh =
            Mesh { vertices: w.vertices.into_iter().map(|[x, y, z]| Vec3::new(x, y, z)).collect(), faces: w.faces };
        let b = Self { mesh, skeleton: w.skeleton, skinning, slat, prompt: w.prompt };
        b.validate().map_err(|e| bad(e.to_string()))?;
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("bundles serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: BundleWire =
            serde_json::from_str(text).map_err(|e| GatewayError::MalformedResponse(format!("bundle: {e}")))?;
        Self::from_wire(w)
    }
}

pub(crate) fn decode_musw(b64: &str) -> Result<SkinningMatrix> {
    let bytes = B64.decode(b64).map_err(|e| GatewayError::MalformedResponse(format!("skinning base64: {e}")))?;
    SkinningMatrix::from_musw(&bytes).map_err(|e| GatewayError::MalformedResponse(e.to_string()))
}

pub(crate) fn decode_slat(b64: &str) -> Result<SparseLatent> {
    let bytes = B64.decode(b64).map_err(|e| GatewayError::MalformedResponse(format!("latent base64: {e}")))?;
    SparseLatent::from_slat(&bytes).map_err(|e| GatewayError::MalformedResponse(e.to_string()))
}

/// Procedural bundle for a template name (`quadruped`, `ram`, `biped`,
/// `winged`, `fish`).
pub fn fixture_bundle(name: &str) -> Result<AssetBundle> {
    let kind: TemplateKind = name.parse().map_err(|_| GatewayError::UnknownFixture(name.to_string()))?;
    let t = CreatureTemplate::fixture(kind);
    let a = synthesize(&t, DEFAULT_RESOLUTION, DEFAULT_CHANNELS);
    Ok(AssetBundle {
        mesh: Mesh { vertices: a.vertices, faces: a.faces },
        skeleton: t.skeleton,
        skinning: a.skinning,
        slat: a.slat,
        prompt: kind.prompt().to_string(),
    })
}
