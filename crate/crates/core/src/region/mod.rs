//! Skinning weights carried from mesh vertices to latent voxels.
//!
//! Joint-level weights are summed per semantic region and normalized, then
//! each voxel takes an inverse-distance average of the region weights of its
//! `k` nearest vertices.

mod kdtree;
pub mod musw;

pub use kdtree::KdTree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Parallelism};
use crate::geometry::Vec3;
use crate::skeleton::{CleanSkeleton, RegionKey, SemanticPartition};

/// Guard on the per-vertex normalizer.
pub const REGION_EPSILON: f64 = 1e-12;
pub const DEFAULT_K: usize = 8;
pub const DEFAULT_DISTANCE_FLOOR: f64 = 1e-8;
/// Rows may exceed 1 by this much before they are renormalized on ingest.
const ROW_SUM_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("partition joint {0} has no skinning column")]
    UnmappedJoint(usize),
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("skinning file: {0}")]
    Format(String),
}

pub type Result<T, E = RegionError> = std::result::Result<T, E>;

/// Dense `Q × J` vertex-to-joint influence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningMatrix {
    vertices: usize,
    joints: usize,
    weights: Vec<f64>,
    joint_index_map: Vec<usize>,
}

impl SkinningMatrix {
    /// Validates entries and rescales any row whose sum exceeds one.
    /// `joint_index_map` defaults to the identity.
    pub fn from_dense(
        vertices: usize,
        joints: usize,
        mut weights: Vec<f64>,
        joint_index_map: Option<Vec<usize>>,
    ) -> Result<Self> {
        if weights.len() != vertices * joints {
            return Err(RegionError::InvalidWeights(format!(
                "{} entries for a {vertices}x{joints} matrix",
                weights.len()
            )));
        }
        if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(RegionError::InvalidWeights(format!("entry {k} is negative or non-finite")));
        }
        let joint_index_map = joint_index_map.unwrap_or_else(|| (0..joints).collect());
        if joint_index_map.len() != joints {
            return Err(RegionError::InvalidWeights("joint_index_map length differs from J".into()));
        }
        if joints > 0 {
            for row in weights.chunks_mut(joints) {
                let sum: f64 = row.iter().sum();
                if sum > 1.0 + ROW_SUM_SLACK {
                    row.iter_mut().for_each(|w| *w /= sum);
                }
            }
        }
        Ok(Self { vertices, joints, weights, joint_index_map })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.joints..(i + 1) * self.joints]
    }

    pub fn joint_index_map(&self) -> &[usize] {
        &self.joint_index_map
    }

    pub fn to_musw(&self) -> Vec<u8> {
        musw::encode(self)
    }

    pub fn from_musw(bytes: &[u8]) -> Result<Self> {
        musw::decode(bytes)
    }
}

/// Row-major `rows × regions` weights with a fixed region column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub region_order: Vec<RegionKey>,
    pub weights: Vec<f64>,
}

impl WeightTable {
    pub fn region_count(&self) -> usize {
        self.region_order.len()
    }

    pub fn rows(&self) -> usize {
        match self.region_order.len() {
            0 => 0,
            r => self.weights.len() / r,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let r = self.region_order.len();
        &self.weights[i * r..(i + 1) * r]
    }

    pub fn column(&self, key: RegionKey) -> Option<usize> {
        self.region_order.iter().position(|k| *k == key)
    }
}

/// Per-vertex region weights.
pub type RegionWeightMatrix = WeightTable;
/// Per-voxel region weights aligned with a latent's voxel order.
pub type SlatRegionWeights = WeightTable;

/// Sums joint weights per region and normalizes each vertex row by the total
/// region mass, guarded by [`REGION_EPSILON`]. Mass on joints outside every
/// region does not enter the normalizer.
pub fn aggregate_region_weights(
    w: &SkinningMatrix,
    partition: &SemanticPartition,
    clean: &CleanSkeleton,
) -> Result<RegionWeightMatrix> {
    let r = partition.regions.len();
    let mut column_region: Vec<Option<usize>> = vec![None; w.joint_count()];
    for (ri, region) in partition.regions.iter().enumerate() {
        for &j in &region.joints {
            let originals = clean.original_joint_map.get(j).ok_or(RegionError::UnmappedJoint(j))?;
            let mut mapped = false;
            for (c, orig) in w.joint_index_map().iter().enumerate() {
                if originals.contains(orig) {
                    column_region[c] = Some(ri);
                    mapped = true;
                }
            }
            if !mapped {
                return Err(RegionError::UnmappedJoint(j));
            }
        }
    }
    let rows = map_indexed(w.vertex_count(), Parallelism::Parallel, |i| {
        let mut num = vec![0.0; r];
        for (c, &x) in w.row(i).iter().enumerate() {
            if let Some(ri) = column_region[c] {
                num[ri] += x;
            }
        }
        let den: f64 = num.iter().sum();
        let den = den.max(REGION_EPSILON);
        num.iter_mut().for_each(|x| *x /= den);
        num
    });
    Ok(WeightTable { region_order: partition.keys(), weights: rows.concat() })
}

/// Inverse-distance kNN transfer of vertex region weights to voxel positions
/// (canonical coordinates).
pub fn knn_transfer(
    region_weights: &RegionWeightMatrix,
    vertices: &[Vec3],
    voxel_positions: &[Vec3],
    k: usize,
    distance_floor: f64,
    mode: Parallelism,
) -> Result<SlatRegionWeights> {
    if vertices.is_empty() {
        return Err(RegionError::EmptyMesh);
    }
    if k == 0 || k > vertices.len() {
        return Err(RegionError::InvalidParameter(format!("k = {k} with {} vertices", vertices.len())));
    }
    if distance_floor.is_nan() || distance_floor <= 0.0 {
        return Err(RegionError::InvalidParameter("distance floor must be positive".into()));
    }
    if region_weights.rows() != vertices.len() && region_weights.region_count() > 0 {
        return Err(RegionError::InvalidParameter("region weights and vertices differ in length".into()));
    }
    let tree = KdTree::build(vertices);
    let r = region_weights.region_count();
    let rows = map_indexed(voxel_positions.len(), mode, |i| {
        let nn = tree.nearest(&voxel_positions[i], k);
        transfer_row(region_weights, &nn, distance_floor, r)
    });
    Ok(WeightTable { region_order: region_weights.region_order.clone(), weights: rows.concat() })
}

fn transfer_row(rw: &RegionWeightMatrix, nn: &[(f64, usize)], floor: f64, r: usize) -> Vec<f64> {
    let first = rw.row(nn[0].1);
    if nn.iter().all(|&(_, s)| rw.row(s) == first) {
        return first.to_vec();
    }
    let alpha: Vec<f64> = nn.iter().map(|&(d2, _)| 1.0 / d2.sqrt().max(floor)).collect();
    let total: f64 = alpha.iter().sum();
    let mut out = vec![0.0; r];
    for (a, &(_, s)) in alpha.iter().zip(nn) {
        let beta = a / total;
        for (o, w) in out.iter_mut().zip(rw.row(s)) {
            *o += beta * w;
        }
    }
    out
}

/// Normalized inverse-distance weights for the given neighbor distances.
pub fn inverse_distance_weights(distances: &[f64], floor: f64) -> Vec<f64> {
    let alpha: Vec<f64> = distances.iter().map(|d| 1.0 / d.max(floor)).collect();
    let total: f64 = alpha.iter().sum();
    alpha.iter().map(|a| a / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "tau")]
pub enum AssignMode {
    /// Single region per row; the first column in region order wins ties.
    Argmax,
    /// Every region whose weight reaches the threshold.
    Threshold(f64),
}

pub fn assign_regions(weights: &SlatRegionWeights, mode: AssignMode) -> Vec<Vec<usize>> {
    (0..weights.rows())
        .map(|i| {
            let row = weights.row(i);
            match mode {
                AssignMode::Argmax => vec![argmax(row)],
                AssignMode::Threshold(tau) => {
                    row.iter().enumerate().filter(|(_, w)| **w >= tau).map(|(c, _)| c).collect()
                }
            }
        })
        .collect()
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &w) in row.iter().enumerate().skip(1) {
        if w > row[best] {
            best = c;
        }
    }
    best
}
