//! Dense-array reimplementation of composition, compared bit for bit.
//!
//! Shares only the coordinate helpers (`to_canonical`, `quantize`,
//! `Affine3::apply`) with the library. Every accumulation runs in the
//! documented order: inputs as given, positions ascending, subsamples
//! ascending.

use chimera_core::exec::Parallelism;
use chimera_core::voxel::{compose, quantize, to_canonical, ComposeConfig, ComposeInput, Neighborhood, SparseLatent};
use chimera_core::{Affine3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, PartialEq)]
pub struct Dense {
    pub positions: Vec<[u16; 3]>,
    pub features: Vec<u32>,
    pub provenance: Vec<usize>,
    pub seam: Vec<[u16; 3]>,
    pub grid_features: Vec<u64>,
    pub grid_weights: Vec<u64>,
    pub grid_filled: Vec<bool>,
}

/// Per-input fine grid of `(weight, feature)`.
type FineGrid = Vec<Option<(f64, Vec<f32>)>>;

/// Contributions to one cell: `(weight, features)` in arrival order.
type Cell = Vec<(f64, Vec<f64>)>;

fn merged(cell: &Cell) -> Option<Vec<f64>> {
    if cell.len() == 1 {
        return Some(cell[0].1.clone());
    }
    let c = cell[0].1.len();
    let mut num = vec![0.0; c];
    let mut den = 0.0;
    for (w, z) in cell {
        for k in 0..c {
            num[k] += w * z[k];
        }
        den += w;
    }
    if den <= 0.0 {
        return None;
    }
    Some(num.iter().map(|x| x / den).collect())
}

fn idx(p: [usize; 3], n: usize) -> usize {
    (p[0] * n + p[1]) * n + p[2]
}

/// Returns per-input dense fine grids of `(weight, feature)`.
fn transform_dense(z: &SparseLatent, w: &[f64], t: &Affine3) -> Option<FineGrid> {
    let n = z.resolution() as usize;
    let mut src: Vec<Option<usize>> = vec![None; n * n * n];
    for (i, p) in z.positions().iter().enumerate() {
        src[idx([p[0] as usize, p[1] as usize, p[2] as usize], n)] = Some(i);
    }
    let linear_identity = t.linear == Affine3::identity().linear;
    let mut offs = Vec::new();
    if linear_identity {
        offs.push(Vec3::zeros());
    } else {
        for a in [-0.25, 0.25] {
            for b in [-0.25, 0.25] {
                for e in [-0.25, 0.25] {
                    offs.push(Vec3::new(a, b, e) / n as f64);
                }
            }
        }
    }
    let mut cells: Vec<Cell> = vec![Vec::new(); n * n * n];
    let (mut total, mut dropped) = (0usize, 0usize);
    for x in 0..n {
        for y in 0..n {
            for e in 0..n {
                let Some(i) = src[idx([x, y, e], n)] else { continue };
                let center = to_canonical(&[x as u16, y as u16, e as u16], n as u16);
                for off in &offs {
                    total += 1;
                    match quantize(&t.apply(&(center + off)), n as u16) {
                        Some(q) => cells[idx([q[0] as usize, q[1] as usize, q[2] as usize], n)]
                            .push((w[i], z.feature(i).iter().map(|&v| v as f64).collect())),
                        None => dropped += 1,
                    }
                }
            }
        }
    }
    if dropped * 2 > total {
        return None;
    }
    let mut out = vec![None; n * n * n];
    for (k, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        let wsum: f64 = cell.iter().fold(0.0, |a, (w, _)| a + w);
        let feat = merged(cell)?;
        out[k] = Some((wsum / cell.len() as f64, feat.into_iter().map(|v| v as f32).collect()));
    }
    Some(out)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..row.len() {
        if row[k] > row[best] {
            best = k;
        }
    }
    best
}

pub fn oracle(inputs: &[ComposeInput], cfg: &ComposeConfig) -> Option<Dense> {
    let n = inputs[0].latent.resolution() as usize;
    let c = inputs[0].latent.channels() as usize;
    let d = cfg.coarse_resolution as usize;
    let f = n / d;
    let r = inputs.len();
    let fine: Vec<FineGrid> =
        inputs.iter().map(|i| transform_dense(&i.latent, &i.weights, &i.transform)).collect::<Option<_>>()?;

    // Coarse pooling.
    let cells = d * d * d;
    let mut acc: Vec<Cell> = vec![Vec::new(); cells];
    let mut mass = vec![0.0; cells * r];
    for (ri, g) in fine.iter().enumerate() {
        for x in 0..n {
            for y in 0..n {
                for e in 0..n {
                    let Some((w, z)) = &g[idx([x, y, e], n)] else { continue };
                    let cell = idx([x / f, y / f, e / f], d);
                    acc[cell].push((*w, z.iter().map(|&v| v as f64).collect()));
                    mass[cell * r + ri] += w;
                }
            }
        }
    }
    let mut occ = vec![false; cells];
    let mut feat = vec![0.0; cells * c];
    let mut rows = vec![0.0; cells * r];
    let mut filled = vec![false; cells];
    for k in 0..cells {
        if acc[k].is_empty() {
            continue;
        }
        let den: f64 = acc[k].iter().fold(0.0, |a, (w, _)| a + w);
        if den <= 0.0 {
            return None;
        }
        occ[k] = true;
        for q in 0..r {
            rows[k * r + q] = mass[k * r + q] / den;
        }
        feat[k * c..(k + 1) * c].copy_from_slice(&merged(&acc[k])?);
    }

    // Gap filling, one full pass at a time.
    for _ in 0..cfg.passes {
        let (o0, f0, r0) = (occ.clone(), feat.clone(), rows.clone());
        for x in 0..d {
            for y in 0..d {
                for e in 0..d {
                    let k = idx([x, y, e], d);
                    if o0[k] {
                        continue;
                    }
                    let mut nb = Vec::new();
                    for dx in -1i32..=1 {
                        for dy in -1i32..=1 {
                            for dz in -1i32..=1 {
                                let m = dx.abs() + dy.abs() + dz.abs();
                                if m == 0 || (cfg.neighborhood == Neighborhood::Six && m > 1) {
                                    continue;
                                }
                                let q = [x as i32 + dx, y as i32 + dy, e as i32 + dz];
                                if q.iter().any(|&v| v < 0 || v >= d as i32) {
                                    continue;
                                }
                                let j = idx([q[0] as usize, q[1] as usize, q[2] as usize], d);
                                if o0[j] {
                                    nb.push(j);
                                }
                            }
                        }
                    }
                    let doms: Vec<usize> = nb.iter().map(|&j| argmax(&r0[j * r..(j + 1) * r])).collect();
                    if !doms.iter().any(|&a| a != doms[0]) {
                        continue;
                    }
                    let kf = nb.len() as f64;
                    let mut fs = vec![0.0; c];
                    let mut rs = vec![0.0; r];
                    for &j in &nb {
                        for q in 0..c {
                            fs[q] += f0[j * c + q];
                        }
                        for q in 0..r {
                            rs[q] += r0[j * r + q];
                        }
                    }
                    fs.iter_mut().for_each(|v| *v /= kf);
                    rs.iter_mut().for_each(|v| *v /= kf);
                    let s: f64 = rs.iter().sum();
                    rs.iter_mut().for_each(|v| *v /= s);
                    occ[k] = true;
                    filled[k] = true;
                    feat[k * c..(k + 1) * c].copy_from_slice(&fs);
                    rows[k * r..(k + 1) * r].copy_from_slice(&rs);
                }
            }
        }
    }

    // Fine output in position order.
    let mut out = Dense {
        positions: Vec::new(),
        features: Vec::new(),
        provenance: Vec::new(),
        seam: Vec::new(),
        grid_features: feat.iter().map(|v| v.to_bits()).collect(),
        grid_weights: rows.iter().map(|v| v.to_bits()).collect(),
        grid_filled: filled.clone(),
    };
    for x in 0..n {
        for y in 0..n {
            for e in 0..n {
                let p = [x as u16, y as u16, e as u16];
                let cell = idx([x / f, y / f, e / f], d);
                if filled[cell] {
                    let mut num = vec![0.0; c];
                    let mut den = 0.0;
                    let mut lo = [0i64; 3];
                    let mut t = [0.0; 3];
                    for (k, v) in [x, y, e].into_iter().enumerate() {
                        let u = (v as f64 + 0.5) / f as f64 - 0.5;
                        lo[k] = u.floor() as i64;
                        t[k] = u - u.floor();
                    }
                    for bx in 0..2i64 {
                        for by in 0..2i64 {
                            for bz in 0..2i64 {
                                let q = [lo[0] + bx, lo[1] + by, lo[2] + bz];
                                if q.iter().any(|&v| v < 0 || v >= d as i64) {
                                    continue;
                                }
                                let j = idx([q[0] as usize, q[1] as usize, q[2] as usize], d);
                                if !occ[j] {
                                    continue;
                                }
                                let wx = if bx == 1 { t[0] } else { 1.0 - t[0] };
                                let wy = if by == 1 { t[1] } else { 1.0 - t[1] };
                                let wz = if bz == 1 { t[2] } else { 1.0 - t[2] };
                                let w = 1.0 * wx * wy * wz;
                                if w == 0.0 {
                                    continue;
                                }
                                for k in 0..c {
                                    num[k] += w * feat[j * c + k];
                                }
                                den += w;
                            }
                        }
                    }
                    out.positions.push(p);
                    out.seam.push(p);
                    out.features.extend(num.iter().map(|v| ((v / den) as f32).to_bits()));
                    out.provenance.push(argmax(&rows[cell * r..(cell + 1) * r]));
                    continue;
                }
                let mut cellv: Cell = Vec::new();
                let mut best = (f64::NEG_INFINITY, 0);
                let mut only: Option<Vec<f32>> = None;
                for (ri, g) in fine.iter().enumerate() {
                    if let Some((w, z)) = &g[idx([x, y, e], n)] {
                        cellv.push((*w, z.iter().map(|&v| v as f64).collect()));
                        only = Some(z.clone());
                        if *w > best.0 {
                            best = (*w, ri);
                        }
                    }
                }
                if cellv.is_empty() {
                    continue;
                }
                let z: Vec<f32> = if cellv.len() == 1 {
                    only.unwrap()
                } else {
                    merged(&cellv)?.into_iter().map(|v| v as f32).collect()
                };
                out.positions.push(p);
                out.features.extend(z.iter().map(|v| v.to_bits()));
                out.provenance.push(best.1);
            }
        }
    }
    Some(out)
}

pub fn library(inputs: &[ComposeInput], cfg: &ComposeConfig) -> Option<Dense> {
    let out = compose(inputs, cfg).ok()?;
    Some(Dense {
        positions: out.latent.positions().to_vec(),
        features: out.latent.features().iter().map(|v| v.to_bits()).collect(),
        provenance: out.provenance,
        seam: out.seam_mask,
        grid_features: out.grid.features.iter().map(|v| v.to_bits()).collect(),
        grid_weights: out.grid.region_weights.iter().map(|v| v.to_bits()).collect(),
        grid_filled: out.grid.filled,
    })
}

/// Random blob-shaped latent; some inputs are empty.
fn blob(rng: &mut ChaCha8Rng, n: u16, c: u16) -> (SparseLatent, Vec<f64>) {
    let mut pos = Vec::new();
    if rng.random_bool(0.9) {
        let size = rng.random_range(1..=n / 2);
        let lo: Vec<u16> = (0..3).map(|_| rng.random_range(0..=n - size)).collect();
        let density = rng.random_range(0.4..1.0);
        for x in lo[0]..lo[0] + size {
            for y in lo[1]..lo[1] + size {
                for z in lo[2]..lo[2] + size {
                    if rng.random_bool(density) {
                        pos.push([x, y, z]);
                    }
                }
            }
        }
    }
    let feats = (0..pos.len() * c as usize).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    let weights =
        (0..pos.len()).map(|_| if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.05..1.5) }).collect();
    (SparseLatent::new(n, c, pos, feats).unwrap(), weights)
}

fn transform(rng: &mut ChaCha8Rng, n: u16) -> Affine3 {
    let step = 1.0 / n as f64;
    match rng.random_range(0..5) {
        0 => Affine3::identity(),
        1 => Affine3::translation(Vec3::new(
            rng.random_range(-3..=3) as f64 * step,
            rng.random_range(-3..=3) as f64 * step,
            rng.random_range(-3..=3) as f64 * step,
        )),
        2 => Affine3::rotation_about(&Vec3::y(), &Vec3::zeros(), rng.random_range(-3.2..3.2)),
        3 => Affine3::scale_about(rng.random_range(0.7..1.3), &Vec3::new(0.05, -0.02, 0.0)),
        _ => Affine3::reflection(&Vec3::new(rng.random_range(-0.1..0.1), 0.0, 0.0), &Vec3::x()),
    }
}

pub fn case(seed: u64) -> (Vec<ComposeInput>, ComposeConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: u16 = if rng.random_bool(0.5) { 8 } else { 16 };
    let d: u16 = if n == 8 { [2, 4][rng.random_range(0..2)] } else { [4, 8][rng.random_range(0..2)] };
    let c: u16 = rng.random_range(1..=4);
    let count = rng.random_range(1..=4);
    let mut inputs = Vec::new();
    for k in 0..count {
        let (latent, weights) = blob(&mut rng, n, c);
        inputs.push(ComposeInput { label: format!("in{k}"), latent, weights, transform: transform(&mut rng, n) });
    }
    if inputs.iter().all(|i| i.latent.is_empty()) {
        let (latent, weights) = blob(&mut rng, n, c);
        inputs[0].latent = latent;
        inputs[0].weights = weights;
    }
    let cfg = ComposeConfig {
        coarse_resolution: d,
        passes: rng.random_range(0..=3),
        neighborhood: if rng.random_bool(0.5) { Neighborhood::Six } else { Neighborhood::TwentySix },
        parallelism: if rng.random_bool(0.5) { Parallelism::Sequential } else { Parallelism::Parallel },
    };
    (inputs, cfg)
}
