//! Region extraction, rigid re-voxelization and coarse-grid blending.
//!
//! Accumulation order is fixed everywhere so results do not depend on the
//! execution mode: inputs in the order given, voxels in ascending position
//! order, supersamples in ascending offset order.

use serde::{Deserialize, Serialize};

use super::DEFAULT_COARSE_RESOLUTION;
use super::{quantize, to_canonical, Merge, Position, Result, SparseLatent, VoxelError};
use crate::exec::{map_indexed, map_slice, Parallelism};
use crate::geometry::{Affine3, Vec3};
use crate::region::{argmax, SlatRegionWeights};
use crate::skeleton::RegionKey;

/// A latent whose voxels each carry one blending weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLatent {
    pub latent: SparseLatent,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionLatent {
    pub key: RegionKey,
    pub latent: SparseLatent,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub regions: Vec<RegionLatent>,
    /// Regions that received no voxels.
    pub empty: Vec<RegionKey>,
}

/// Splits a latent by the argmax of its region-weight rows. Each voxel keeps
/// its weight for the region it lands in.
pub fn extract_region_latents(slat: &SparseLatent, weights: &SlatRegionWeights) -> Result<Extraction> {
    let r = weights.region_count();
    if r == 0 || weights.rows() != slat.len() || weights.weights.len() != r * slat.len() {
        return Err(VoxelError::Mismatch(format!(
            "{} weight rows of {r} regions for {} voxels",
            weights.rows(),
            slat.len()
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); r];
    for i in 0..slat.len() {
        members[argmax(weights.row(i))].push(i);
    }
    let mut out = Extraction { regions: Vec::new(), empty: Vec::new() };
    for (c, idx) in members.into_iter().enumerate() {
        let key = weights.region_order[c];
        if idx.is_empty() {
            out.empty.push(key);
            continue;
        }
        out.regions.push(RegionLatent {
            key,
            weights: idx.iter().map(|&i| weights.row(i)[c]).collect(),
            latent: slat.select(&idx),
        });
    }
    Ok(out)
}

const SUBSAMPLE: [f64; 2] = [-0.25, 0.25];

/// Moves every voxel center by `t` and snaps it back onto the grid.
///
/// When `t` has a non-identity linear part each voxel is represented by a
/// 2×2×2 set of subsamples so that rotated or enlarged shapes stay closed.
/// Samples landing in the same cell merge as a weighted average; the merged
/// voxel carries the mean of the contributing weights. Output is sorted by
/// position.
pub fn transform_voxels(latent: &SparseLatent, weights: &[f64], t: &Affine3) -> Result<WeightedLatent> {
    if weights.len() != latent.len() {
        return Err(VoxelError::Mismatch(format!("{} weights for {} voxels", weights.len(), latent.len())));
    }
    if !t.is_finite() || t.inverse().is_none() {
        return Err(VoxelError::NonInvertible);
    }
    let n = latent.resolution();
    let c = latent.channels() as usize;
    let offsets: Vec<Vec3> = if t.is_identity_linear(0.0) {
        vec![Vec3::zeros()]
    } else {
        let mut v = Vec::with_capacity(8);
        for dx in SUBSAMPLE {
            for dy in SUBSAMPLE {
                for dz in SUBSAMPLE {
                    v.push(Vec3::new(dx, dy, dz) / n as f64);
                }
            }
        }
        v
    };
    let order = latent.sorted_order();
    let total = order.len() * offsets.len();
    let mut hits: Vec<(u64, usize)> = Vec::with_capacity(total);
    for (rank, &i) in order.iter().enumerate() {
        let center = to_canonical(&latent.positions()[i], n);
        for (s, off) in offsets.iter().enumerate() {
            if let Some(q) = quantize(&t.apply(&(center + off)), n) {
                hits.push((linear(&q, n), rank * offsets.len() + s));
            }
        }
    }
    let dropped = total - hits.len();
    if dropped * 2 > total {
        return Err(VoxelError::OutOfBounds { dropped, total });
    }
    hits.sort_unstable();

    let mut positions = Vec::new();
    let mut features = Vec::with_capacity(c);
    let mut out_weights = Vec::new();
    let mut k = 0;
    while k < hits.len() {
        let cell = hits[k].0;
        let mut acc = Merge::new(c);
        while k < hits.len() && hits[k].0 == cell {
            let src = order[hits[k].1 / offsets.len()];
            acc.add(weights[src], latent.feature(src).iter().map(|&x| x as f64));
            k += 1;
        }
        positions.push(delinear(cell, n));
        out_weights.push(acc.weight_sum() / acc.count() as f64);
        features.extend(acc.finish()?.into_iter().map(|x| x as f32));
    }
    Ok(WeightedLatent { latent: SparseLatent::new(n, latent.channels(), positions, features)?, weights: out_weights })
}

fn linear(p: &Position, n: u16) -> u64 {
    let n = n as u64;
    (p[0] as u64 * n + p[1] as u64) * n + p[2] as u64
}

fn delinear(i: u64, n: u16) -> Position {
    let n = n as u64;
    [(i / (n * n)) as u16, (i / n % n) as u16, (i % n) as u16]
}

/// Dense `D³` grid of blended features and per-input region weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCoarseGrid {
    pub resolution: u16,
    pub channels: usize,
    pub regions: usize,
    pub occupancy: Vec<bool>,
    pub features: Vec<f64>,
    pub region_weights: Vec<f64>,
    /// Cells occupied by gap filling rather than by source voxels.
    pub filled: Vec<bool>,
}

impl DenseCoarseGrid {
    pub fn new(resolution: u16, channels: usize, regions: usize) -> Self {
        let cells = (resolution as usize).pow(3);
        Self {
            resolution,
            channels,
            regions,
            occupancy: vec![false; cells],
            features: vec![0.0; cells * channels],
            region_weights: vec![0.0; cells * regions],
            filled: vec![false; cells],
        }
    }

    pub fn cell_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn index(&self, p: [usize; 3]) -> usize {
        let d = self.resolution as usize;
        (p[0] * d + p[1]) * d + p[2]
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let d = self.resolution as usize;
        [i / (d * d), i / d % d, i % d]
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.region_weights[i * self.regions..(i + 1) * self.regions]
    }

    pub fn dominant(&self, i: usize) -> usize {
        argmax(self.weight_row(i))
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|o| **o).count()
    }
}

/// Pools fine voxels into `d³` cells. Features and region weights of a cell
/// are weight-weighted means over every fine voxel inside it, across inputs.
pub fn downsample_to_coarse(inputs: &[WeightedLatent], d: u16) -> Result<DenseCoarseGrid> {
    let Some(first) = inputs.first() else {
        return Ok(DenseCoarseGrid::new(d, 0, 0));
    };
    let n = first.latent.resolution();
    let c = first.latent.channels() as usize;
    check_inputs(inputs.iter().map(|w| &w.latent), n, c as u16, d)?;
    let f = n / d;
    let r = inputs.len();
    let mut grid = DenseCoarseGrid::new(d, c, r);
    let mut acc: Vec<Option<Merge>> = vec![None; grid.cell_count()];
    let mut mass = vec![0.0; grid.cell_count() * r];
    for (ri, input) in inputs.iter().enumerate() {
        if input.weights.len() != input.latent.len() {
            return Err(VoxelError::Mismatch(format!("input {ri} weights misaligned")));
        }
        for i in input.latent.sorted_order() {
            let p = input.latent.positions()[i];
            let cell = grid.index([(p[0] / f) as usize, (p[1] / f) as usize, (p[2] / f) as usize]);
            let w = input.weights[i];
            acc[cell].get_or_insert_with(|| Merge::new(c)).add(w, input.latent.feature(i).iter().map(|&x| x as f64));
            mass[cell * r + ri] += w;
        }
    }
    for (cell, a) in acc.into_iter().enumerate() {
        let Some(a) = a else { continue };
        let den = a.weight_sum();
        if den <= 0.0 {
            return Err(VoxelError::AllZeroWeights);
        }
        grid.occupancy[cell] = true;
        for k in 0..r {
            grid.region_weights[cell * r + k] = mass[cell * r + k] / den;
        }
        grid.features[cell * c..(cell + 1) * c].copy_from_slice(&a.finish()?);
    }
    Ok(grid)
}

fn check_inputs<'a>(latents: impl Iterator<Item = &'a SparseLatent>, n: u16, c: u16, d: u16) -> Result<()> {
    if d == 0 || !n.is_multiple_of(d) {
        return Err(VoxelError::Mismatch(format!("coarse resolution {d} does not divide {n}")));
    }
    for z in latents {
        if z.resolution() != n || z.channels() != c {
            return Err(VoxelError::Mismatch(format!(
                "latent {}³×{} differs from {n}³×{c}",
                z.resolution(),
                z.channels()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    /// Face neighbors only.
    Six,
    #[default]
    TwentySix,
}

impl Neighborhood {
    fn offsets(self) -> Vec<[i32; 3]> {
        let mut v = Vec::new();
        for dx in -1i32..=1 {
            for dy in -1i32..=1 {
                for dz in -1i32..=1 {
                    let m = dx.abs() + dy.abs() + dz.abs();
                    if m == 0 || (self == Neighborhood::Six && m > 1) {
                        continue;
                    }
                    v.push([dx, dy, dz]);
                }
            }
        }
        v
    }
}

/// Occupies empty cells that touch at least two different dominant regions.
///
/// Each pass reads only the previous pass's grid. A new cell takes the plain
/// mean of its occupied neighbors' features and region-weight rows, the
/// latter renormalized to sum to one.
pub fn fill_gaps(grid: &DenseCoarseGrid, passes: usize, hood: Neighborhood, mode: Parallelism) -> DenseCoarseGrid {
    let offsets = hood.offsets();
    let mut cur = grid.clone();
    for _ in 0..passes {
        let prev = &cur;
        let updates = map_indexed(prev.cell_count(), mode, |i| fill_cell(prev, i, &offsets));
        let mut next = prev.clone();
        let mut changed = false;
        for (i, u) in updates.into_iter().enumerate() {
            let Some((feat, row)) = u else { continue };
            changed = true;
            next.occupancy[i] = true;
            next.filled[i] = true;
            next.features[i * next.channels..(i + 1) * next.channels].copy_from_slice(&feat);
            next.region_weights[i * next.regions..(i + 1) * next.regions].copy_from_slice(&row);
        }
        cur = next;
        if !changed {
            break;
        }
    }
    cur
}

fn fill_cell(g: &DenseCoarseGrid, i: usize, offsets: &[[i32; 3]]) -> Option<(Vec<f64>, Vec<f64>)> {
    if g.occupancy[i] {
        return None;
    }
    let d = g.resolution as i32;
    let p = g.coords(i);
    let mut neighbors = Vec::new();
    let mut first_region = None;
    let mut mixed = false;
    for o in offsets {
        let q = [p[0] as i32 + o[0], p[1] as i32 + o[1], p[2] as i32 + o[2]];
        if q.iter().any(|&x| x < 0 || x >= d) {
            continue;
        }
        let j = g.index([q[0] as usize, q[1] as usize, q[2] as usize]);
        if !g.occupancy[j] {
            continue;
        }
        let dom = g.dominant(j);
        match first_region {
            None => first_region = Some(dom),
            Some(r) if r != dom => mixed = true,
            _ => {}
        }
        neighbors.push(j);
    }
    if !mixed {
        return None;
    }
    let k = neighbors.len() as f64;
    let mut feat = vec![0.0; g.channels];
    let mut row = vec![0.0; g.regions];
    for &j in &neighbors {
        feat.iter_mut().zip(g.feature(j)).for_each(|(a, b)| *a += b);
        row.iter_mut().zip(g.weight_row(j)).for_each(|(a, b)| *a += b);
    }
    feat.iter_mut().for_each(|x| *x /= k);
    row.iter_mut().for_each(|x| *x /= k);
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    Some((feat, row))
}

/// Fine latent assembled from a blended grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedLatent {
    pub latent: SparseLatent,
    /// Index into `sources` of the dominant input for each voxel.
    pub provenance: Vec<usize>,
    pub sources: Vec<String>,
    /// Sorted positions created by gap filling.
    pub seam_mask: Vec<Position>,
    pub grid: DenseCoarseGrid,
}

/// Re-emits the fine voxels of every input and fills each gap cell with a
/// full block whose features are trilinear in the coarse features.
///
/// Fine voxels shared by several inputs merge as a weighted average; the
/// heaviest contributor (first on ties) becomes the voxel's provenance.
pub fn upsample_to_slat(
    grid: &DenseCoarseGrid,
    fine: &[WeightedLatent],
    sources: &[String],
    mode: Parallelism,
) -> Result<ComposedLatent> {
    let Some(first) = fine.first() else {
        return Err(VoxelError::NoInputs);
    };
    let n = first.latent.resolution();
    let ch = first.latent.channels();
    let c = ch as usize;
    let d = grid.resolution;
    check_inputs(fine.iter().map(|w| &w.latent), n, ch, d)?;
    if sources.len() != fine.len() || grid.regions != fine.len() {
        return Err(VoxelError::Mismatch("sources, inputs and grid regions differ".into()));
    }
    let f = (n / d) as usize;

    let mut entries: Vec<(Position, usize, usize)> = Vec::new();
    for (ri, w) in fine.iter().enumerate() {
        entries.extend(w.latent.positions().iter().enumerate().map(|(i, p)| (*p, ri, i)));
    }
    entries.sort_unstable();
    let mut voxels: Vec<(Position, Vec<f32>, usize)> = Vec::with_capacity(entries.len());
    let mut k = 0;
    while k < entries.len() {
        let pos = entries[k].0;
        let mut acc = Merge::new(c);
        let mut best = (f64::NEG_INFINITY, 0);
        while k < entries.len() && entries[k].0 == pos {
            let (_, ri, i) = entries[k];
            let w = fine[ri].weights[i];
            acc.add(w, fine[ri].latent.feature(i).iter().map(|&x| x as f64));
            if w > best.0 {
                best = (w, ri);
            }
            k += 1;
        }
        let feat = if acc.count() == 1 {
            let (_, ri, i) = entries[k - 1];
            fine[ri].latent.feature(i).to_vec()
        } else {
            acc.finish()?.into_iter().map(|x| x as f32).collect()
        };
        voxels.push((pos, feat, best.1));
    }

    let gaps: Vec<usize> = (0..grid.cell_count()).filter(|&i| grid.filled[i]).collect();
    let blocks = map_slice(&gaps, mode, |&cell| gap_block(grid, cell, f));
    let mut seam_mask = Vec::new();
    for block in blocks {
        for (pos, feat, src) in block {
            seam_mask.push(pos);
            voxels.push((pos, feat, src));
        }
    }
    voxels.sort_unstable_by_key(|v| v.0);
    seam_mask.sort_unstable();

    let mut positions = Vec::with_capacity(voxels.len());
    let mut features = Vec::with_capacity(voxels.len() * c);
    let mut provenance = Vec::with_capacity(voxels.len());
    for (p, feat, src) in voxels {
        positions.push(p);
        features.extend(feat);
        provenance.push(src);
    }
    Ok(ComposedLatent {
        latent: SparseLatent::new(n, ch, positions, features)?,
        provenance,
        sources: sources.to_vec(),
        seam_mask,
        grid: grid.clone(),
    })
}

fn gap_block(grid: &DenseCoarseGrid, cell: usize, f: usize) -> Vec<(Position, Vec<f32>, usize)> {
    let base = grid.coords(cell);
    let src = grid.dominant(cell);
    let d = grid.resolution as i64;
    let mut out = Vec::with_capacity(f * f * f);
    for a in 0..f {
        for b in 0..f {
            for e in 0..f {
                let fine = [base[0] * f + a, base[1] * f + b, base[2] * f + e];
                let mut lo = [0i64; 3];
                let mut t = [0.0f64; 3];
                for k in 0..3 {
                    let u = (fine[k] as f64 + 0.5) / f as f64 - 0.5;
                    let fl = u.floor();
                    lo[k] = fl as i64;
                    t[k] = u - fl;
                }
                let mut num = vec![0.0; grid.channels];
                let mut den = 0.0;
                for corner in 0..8 {
                    let bits = [corner >> 2 & 1, corner >> 1 & 1, corner & 1];
                    let q: Vec<i64> = (0..3).map(|k| lo[k] + bits[k] as i64).collect();
                    if q.iter().any(|&x| x < 0 || x >= d) {
                        continue;
                    }
                    let j = grid.index([q[0] as usize, q[1] as usize, q[2] as usize]);
                    if !grid.occupancy[j] {
                        continue;
                    }
                    let w: f64 = (0..3).map(|k| if bits[k] == 1 { t[k] } else { 1.0 - t[k] }).product();
                    if w == 0.0 {
                        continue;
                    }
                    num.iter_mut().zip(grid.feature(j)).for_each(|(a, b)| *a += w * b);
                    den += w;
                }
                let feat = num.into_iter().map(|x| (x / den) as f32).collect();
                out.push(([fine[0] as u16, fine[1] as u16, fine[2] as u16], feat, src));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeConfig {
    pub coarse_resolution: u16,
    pub passes: usize,
    pub neighborhood: Neighborhood,
    pub parallelism: Parallelism,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            coarse_resolution: DEFAULT_COARSE_RESOLUTION,
            passes: 2,
            neighborhood: Neighborhood::TwentySix,
            parallelism: Parallelism::Parallel,
        }
    }
}

/// One latent to place, with its per-voxel weights and placement.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposeInput {
    pub label: String,
    pub latent: SparseLatent,
    pub weights: Vec<f64>,
    pub transform: Affine3,
}

pub fn compose(inputs: &[ComposeInput], cfg: &ComposeConfig) -> Result<ComposedLatent> {
    if inputs.is_empty() {
        return Err(VoxelError::NoInputs);
    }
    let moved: Vec<Result<WeightedLatent>> =
        map_slice(inputs, cfg.parallelism, |i| transform_voxels(&i.latent, &i.weights, &i.transform));
    let moved: Vec<WeightedLatent> = moved.into_iter().collect::<Result<_>>()?;
    let coarse = downsample_to_coarse(&moved, cfg.coarse_resolution)?;
    let filled = fill_gaps(&coarse, cfg.passes, cfg.neighborhood, cfg.parallelism);
    let labels: Vec<String> = inputs.iter().map(|i| i.label.clone()).collect();
    upsample_to_slat(&filled, &moved, &labels, cfg.parallelism)
}
