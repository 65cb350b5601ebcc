//! Stage functions shared by the command line and the HTTP service.

use std::collections::BTreeMap;

use chimera_core::layout::{AssembledSkeleton, AssemblyPlan, ClassifiedAsset, PlannerRequest};
use chimera_core::region::{aggregate_region_weights, assign_regions, knn_transfer};
use chimera_core::skeleton::{CleanSkeleton, OrientationFrame, RegionKey, RegionLabel, SemanticPartition, Skeleton};
use chimera_core::voxel::{compose, to_canonical, ComposeInput, ComposedLatent, DenseCoarseGrid, SparseLatent};
use chimera_core::Affine3;
use chimera_gateway::{fixture_bundle, AssetBundle, EditRequest, Gateway, RgbaImage, DEFAULT_NEGATIVE_PROMPT};
use serde::{Deserialize, Serialize};

use crate::config::{AssetSource, Backends, ComposerParams};
use crate::{EngineError, Result};

/// A source asset after Stage I.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedAsset {
    pub bundle: AssetBundle,
    pub classified: ClassifiedAsset,
}

impl LoadedAsset {
    pub fn id(&self) -> &str {
        &self.classified.id
    }
}

/// Fetches or reads a bundle. Prompt sources are generated and then rigged.
pub fn load_bundle(source: &AssetSource, gateway: &Gateway, backends: &Backends) -> Result<AssetBundle> {
    match source {
        AssetSource::Fixture(name) => Ok(fixture_bundle(name)?),
        AssetSource::Prompt(prompt) => {
            let mut b = gateway.generate_asset(prompt, &backends.gen3d)?;
            let (skeleton, skinning) = gateway.rig_asset(&b.mesh, backends.rig())?;
            b.skeleton = skeleton;
            b.skinning = skinning;
            Ok(b)
        }
        AssetSource::Path(path) => {
            let text = std::fs::read_to_string(path).map_err(|err| EngineError::Io { path: path.clone(), err })?;
            let b = AssetBundle::from_json(&text)?;
            b.validate()?;
            Ok(b)
        }
    }
}

pub fn classify(id: &str, bundle: AssetBundle, prune_fraction: f64) -> Result<LoadedAsset> {
    let classified = ClassifiedAsset::classify(id, &bundle.skeleton, prune_fraction)?;
    Ok(LoadedAsset { bundle, classified })
}

pub fn classified(assets: &[LoadedAsset]) -> Vec<ClassifiedAsset> {
    assets.iter().map(|a| a.classified.clone()).collect()
}

/// Plan for `request` from the configured planner, validated.
pub fn plan(assets: &[LoadedAsset], request: &str, gateway: &Gateway, backends: &Backends) -> Result<AssemblyPlan> {
    let c = classified(assets);
    let req = PlannerRequest::new(&c, request)?;
    Ok(gateway.plan_ops(&req, &c, &backends.planner)?)
}

/// Serializable record of one classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub id: String,
    pub frame: OrientationFrame,
    pub partition: SemanticPartition,
    /// The cleaned skeleton the partition indexes into.
    pub skeleton: Skeleton,
    pub original_joint_map: Vec<Vec<usize>>,
    pub pruned_branches: Vec<Vec<usize>>,
}

impl ClassificationRecord {
    pub fn of(a: &ClassifiedAsset) -> Self {
        Self {
            id: a.id.clone(),
            frame: a.frame,
            partition: a.partition.clone(),
            skeleton: a.clean.skeleton.clone(),
            original_joint_map: a.clean.original_joint_map.clone(),
            pruned_branches: a.clean.pruned_branches.clone(),
        }
    }

    pub fn into_classified(self) -> ClassifiedAsset {
        ClassifiedAsset {
            id: self.id,
            clean: CleanSkeleton {
                skeleton: self.skeleton,
                original_joint_map: self.original_joint_map,
                pruned_branches: self.pruned_branches,
            },
            partition: self.partition,
            frame: self.frame,
        }
    }
}

/// Voxels of one region: indices into the asset latent with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionVoxels {
    pub key: RegionKey,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Region weights carried from the mesh onto the latent, then split by the
/// configured assignment rule. Regions without voxels are left out.
pub fn region_voxels(a: &LoadedAsset, p: &ComposerParams) -> Result<Vec<RegionVoxels>> {
    let b = &a.bundle;
    let c = &a.classified;
    let rw = aggregate_region_weights(&b.skinning, &c.partition, &c.clean)?;
    let voxels = b.slat.canonical_positions();
    let sw = knn_transfer(&rw, &b.mesh.vertices, &voxels, p.k, p.distance_floor, p.parallelism())?;
    let mut out: Vec<RegionVoxels> =
        sw.region_order.iter().map(|&key| RegionVoxels { key, indices: Vec::new(), weights: Vec::new() }).collect();
    for (i, cols) in assign_regions(&sw, p.assign.mode()).into_iter().enumerate() {
        for c in cols {
            out[c].indices.push(i);
            out[c].weights.push(sw.row(i)[c]);
        }
    }
    out.retain(|r| !r.indices.is_empty());
    Ok(out)
}

/// One compose input per placed part copy.
///
/// Parts of the base asset left where they are merge into a single input,
/// since they already fit together; with nothing moved the base latent
/// passes through unchanged.
pub fn compose_inputs(
    assets: &[LoadedAsset],
    assembled: &AssembledSkeleton,
    p: &ComposerParams,
) -> Result<Vec<ComposeInput>> {
    let base = assembled
        .transforms
        .iter()
        .find(|t| t.part.key.label == RegionLabel::Body)
        .map(|t| t.part.asset.clone())
        .ok_or_else(|| EngineError::Invalid("assembly has no body".into()))?;
    let mut regions: BTreeMap<&str, Vec<RegionVoxels>> = BTreeMap::new();
    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
    let mut moved = Vec::new();
    for t in &assembled.transforms {
        let a = find(assets, &t.part.asset)?;
        if !regions.contains_key(a.id()) {
            regions.insert(a.id(), region_voxels(a, p)?);
        }
        let Some(rv) = regions[a.id()].iter().find(|r| r.key == t.part.key) else {
            log::warn!("{} has no voxels", t.part);
            continue;
        };
        if t.part.asset == base && t.transform == Affine3::identity() {
            for (&i, &w) in rv.indices.iter().zip(&rv.weights) {
                let e = merged.entry(i).or_insert(w);
                *e = e.max(w);
            }
            continue;
        }
        moved.push(ComposeInput {
            label: format!("{}#{}", t.part, t.copy),
            latent: a.bundle.slat.select(&rv.indices),
            weights: rv.weights.clone(),
            transform: t.transform,
        });
    }
    let mut inputs = Vec::with_capacity(moved.len() + 1);
    if !merged.is_empty() {
        let b = find(assets, &base)?;
        let idx: Vec<usize> = merged.keys().copied().collect();
        inputs.push(ComposeInput {
            label: base.clone(),
            latent: b.bundle.slat.select(&idx),
            weights: merged.into_values().collect(),
            transform: Affine3::identity(),
        });
    }
    inputs.extend(moved);
    Ok(inputs)
}

pub fn compose_assembly(
    assets: &[LoadedAsset],
    assembled: &AssembledSkeleton,
    p: &ComposerParams,
) -> Result<ComposedLatent> {
    let inputs = compose_inputs(assets, assembled, p)?;
    Ok(compose(&inputs, &p.compose_config())?)
}

fn find<'a>(assets: &'a [LoadedAsset], id: &str) -> Result<&'a LoadedAsset> {
    assets.iter().find(|a| a.id() == id).ok_or_else(|| EngineError::Invalid(format!("no asset named {id:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub voxels: usize,
    pub seam_voxels: usize,
    pub junctions: Vec<Junction>,
}

/// A bone joining two placed parts, with the gap-filled voxels around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub from: String,
    pub to: String,
    pub position: [f64; 3],
    pub seam_voxels: usize,
}

/// Seam voxels near each junction, counted within two coarse cells.
pub fn seam_report(composed: &ComposedLatent, assembled: &AssembledSkeleton) -> SeamReport {
    let n = composed.latent.resolution();
    let radius = 2.0 / composed.grid.resolution as f64;
    let seams: Vec<_> = composed.seam_mask.iter().map(|p| to_canonical(p, n)).collect();
    let sk = &assembled.skeleton;
    let name = |j: usize| {
        let p = &assembled.provenance[j];
        format!("{}#{}", p.part, p.copy)
    };
    let junctions = sk
        .bones()
        .iter()
        .filter(|[u, v]| {
            let (a, b) = (&assembled.provenance[*u], &assembled.provenance[*v]);
            a.part != b.part || a.copy != b.copy
        })
        .map(|&[u, v]| {
            let mid = (sk.joints()[u] + sk.joints()[v]) * 0.5;
            Junction {
                from: name(u),
                to: name(v),
                position: [mid.x, mid.y, mid.z],
                seam_voxels: seams.iter().filter(|s| (*s - mid).norm() <= radius).count(),
            }
        })
        .collect();
    SeamReport { voxels: composed.latent.len(), seam_voxels: composed.seam_mask.len(), junctions }
}

/// Coarse occupancy as `[value, run]` pairs in x-major cell order.
pub fn occupancy_rle(grid: &DenseCoarseGrid) -> Vec<[u32; 2]> {
    let mut out: Vec<[u32; 2]> = Vec::new();
    for &o in &grid.occupancy {
        let v = o as u32;
        match out.last_mut() {
            Some(last) if last[0] == v => last[1] += 1,
            _ => out.push([v, 1]),
        }
    }
    out
}

/// Side view of a latent: each pixel shows the voxel nearest the viewer
/// along `+z`, colored from its first three channels.
pub fn render_reference(z: &SparseLatent) -> RgbaImage {
    let n = z.resolution() as usize;
    let mut front: Vec<Option<(u16, usize)>> = vec![None; n * n];
    for (i, p) in z.positions().iter().enumerate() {
        let px = (n - 1 - p[1] as usize) * n + p[0] as usize;
        if front[px].is_none_or(|(depth, _)| p[2] > depth) {
            front[px] = Some((p[2], i));
        }
    }
    let c = z.channels() as usize;
    let mut pixels = Vec::with_capacity(n * n * 4);
    for f in front {
        match f {
            None => pixels.extend([0, 0, 0, 0]),
            Some((_, i)) => {
                let feat = z.feature(i);
                for k in 0..3 {
                    let x = feat[k % c] as f64;
                    pixels.push(((x.tanh() * 0.5 + 0.5) * 255.0).round() as u8);
                }
                pixels.push(255);
            }
        }
    }
    RgbaImage { width: n as u32, height: n as u32, pixels }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restyled {
    pub reference: RgbaImage,
    pub edited: RgbaImage,
    pub latent: SparseLatent,
}

/// Renders the composed latent, edits the render toward `style` and
/// regenerates features on the unchanged voxel structure.
pub fn restyle(
    z: &SparseLatent,
    style: &str,
    negative: Option<&str>,
    gateway: &Gateway,
    backends: &Backends,
) -> Result<Restyled> {
    if style.trim().is_empty() {
        return Err(EngineError::Invalid("empty style prompt".into()));
    }
    let reference = render_reference(z);
    let req = EditRequest {
        image: reference.clone(),
        positive_prompt: style.to_string(),
        negative_prompt: negative.unwrap_or(DEFAULT_NEGATIVE_PROMPT).to_string(),
        extra_params: BTreeMap::new(),
    };
    let edited = gateway.edit_image(&req, &backends.image_edit)?;
    let latent = gateway.regenerate_features(&edited, z.positions(), z.resolution(), z.channels(), &backends.gen3d)?;
    Ok(Restyled { reference, edited, latent })
}
