//! Sparse voxel latents and their composition.
//!
//! A [`SparseLatent`] is a list of active voxels on an `N³` grid, each with a
//! `C`-channel feature vector. Composition extracts one latent per semantic
//! region, moves each by its plan transform, blends them on a coarse grid
//! where gaps between regions are filled, and re-emits a fine latent.

mod compose;
mod slat;

pub use compose::{
    compose, downsample_to_coarse, extract_region_latents, fill_gaps, transform_voxels, upsample_to_slat,
    ComposeConfig, ComposeInput, ComposedLatent, DenseCoarseGrid, Extraction, Neighborhood, RegionLatent,
    WeightedLatent,
};

use thiserror::Error;

use crate::geometry::Vec3;

pub const DEFAULT_RESOLUTION: u16 = 64;
pub const DEFAULT_CHANNELS: u16 = 8;
pub const DEFAULT_COARSE_RESOLUTION: u16 = 16;

#[derive(Debug, Error)]
pub enum VoxelError {
    #[error("invalid latent: {0}")]
    InvalidLatent(String),
    #[error("every contributing weight is zero")]
    AllZeroWeights,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("{dropped} of {total} transformed samples left the grid")]
    OutOfBounds { dropped: usize, total: usize },
    #[error("transform is not invertible")]
    NonInvertible,
    #[error("inputs disagree: {0}")]
    Mismatch(String),
    #[error("nothing to compose")]
    NoInputs,
    #[error("latent file: {0}")]
    Format(String),
}

pub type Result<T, E = VoxelError> = std::result::Result<T, E>;

pub type Position = [u16; 3];

/// Active voxels with per-voxel features, stored structure-of-arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLatent {
    resolution: u16,
    channels: u16,
    positions: Vec<Position>,
    features: Vec<f32>,
}

impl SparseLatent {
    pub fn new(resolution: u16, channels: u16, positions: Vec<Position>, features: Vec<f32>) -> Result<Self> {
        if resolution == 0 || channels == 0 {
            return Err(VoxelError::InvalidLatent("resolution and channels must be positive".into()));
        }
        if features.len() != positions.len() * channels as usize {
            return Err(VoxelError::InvalidLatent(format!(
                "{} feature values for {} voxels of {channels} channels",
                features.len(),
                positions.len()
            )));
        }
        if let Some(p) = positions.iter().find(|p| p.iter().any(|&c| c >= resolution)) {
            return Err(VoxelError::InvalidLatent(format!("position {p:?} outside {resolution}³")));
        }
        if let Some(k) = features.iter().position(|f| !f.is_finite()) {
            return Err(VoxelError::InvalidLatent(format!("feature value {k} is not finite")));
        }
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(VoxelError::InvalidLatent(format!("duplicate position {:?}", w[0])));
        }
        Ok(Self { resolution, channels, positions, features })
    }

    pub fn empty(resolution: u16, channels: u16) -> Self {
        Self { resolution, channels, positions: Vec::new(), features: Vec::new() }
    }

    pub fn resolution(&self) -> u16 {
        self.resolution
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        let c = self.channels as usize;
        &self.features[i * c..(i + 1) * c]
    }

    /// Voxel centers in the canonical cube.
    pub fn canonical_positions(&self) -> Vec<Vec3> {
        self.positions.iter().map(|p| to_canonical(p, self.resolution)).collect()
    }

    /// Permutation that sorts voxels by position.
    pub fn sorted_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_unstable_by_key(|&i| self.positions[i]);
        order
    }

    /// Copy with voxels reordered by `order`, which must be a permutation or
    /// a subset of indices.
    pub fn select(&self, order: &[usize]) -> Self {
        let c = self.channels as usize;
        let mut features = Vec::with_capacity(order.len() * c);
        for &i in order {
            features.extend_from_slice(self.feature(i));
        }
        Self {
            resolution: self.resolution,
            channels: self.channels,
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            features,
        }
    }

    pub fn to_slat(&self) -> Vec<u8> {
        slat::encode(self)
    }

    pub fn from_slat(bytes: &[u8]) -> Result<Self> {
        slat::decode(bytes)
    }
}

pub fn to_canonical(p: &Position, n: u16) -> Vec3 {
    let n = n as f64;
    Vec3::new((p[0] as f64 + 0.5) / n - 0.5, (p[1] as f64 + 0.5) / n - 0.5, (p[2] as f64 + 0.5) / n - 0.5)
}

/// Nearest grid cell for a canonical point, or `None` outside the grid.
pub fn quantize(c: &Vec3, n: u16) -> Option<Position> {
    let nf = n as f64;
    let mut out = [0u16; 3];
    for k in 0..3 {
        let g = ((c[k] + 0.5) * nf - 0.5).round();
        if !(g >= 0.0 && g < nf) {
            return None;
        }
        out[k] = g as u16;
    }
    Some(out)
}

/// Normalized weighted average of co-located features.
///
/// A single contribution is returned as is.
pub fn merge_overlaps(contributions: &[(f64, &[f64])]) -> Result<Vec<f64>> {
    let Some(&(_, first)) = contributions.first() else {
        return Err(VoxelError::InvalidWeights("no contributions".into()));
    };
    if contributions.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
        return Err(VoxelError::InvalidWeights("weights must be finite and non-negative".into()));
    }
    if contributions.iter().any(|(_, z)| z.len() != first.len()) {
        return Err(VoxelError::Mismatch("feature lengths differ".into()));
    }
    let mut acc = Merge::new(first.len());
    for (w, z) in contributions {
        acc.add(*w, z.iter().copied());
    }
    acc.finish()
}

/// Streaming form of [`merge_overlaps`]. Sums run in insertion order.
#[derive(Debug, Clone)]
pub(crate) struct Merge {
    num: Vec<f64>,
    first: Vec<f64>,
    den: f64,
    count: usize,
}

impl Merge {
    pub(crate) fn new(channels: usize) -> Self {
        Self { num: vec![0.0; channels], first: Vec::new(), den: 0.0, count: 0 }
    }

    pub(crate) fn add(&mut self, w: f64, z: impl IntoIterator<Item = f64>) {
        let start = self.first.is_empty() && self.count == 0;
        for (k, x) in z.into_iter().enumerate() {
            self.num[k] += w * x;
            if start {
                self.first.push(x);
            }
        }
        self.den += w;
        self.count += 1;
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }

    pub(crate) fn weight_sum(&self) -> f64 {
        self.den
    }

    pub(crate) fn finish(self) -> Result<Vec<f64>> {
        if self.count == 1 {
            return Ok(self.first);
        }
        if self.den <= 0.0 {
            return Err(VoxelError::AllZeroWeights);
        }
        Ok(self.num.into_iter().map(|x| x / self.den).collect())
    }
}
