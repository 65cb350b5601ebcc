//! Procedural creatures with known region labels.
//!
//! Every template is built head-forward along `+x` with `+y` up, centered
//! and scaled to fit the canonical cube. Alongside the skeleton it records
//! which joints form each region, so classification can be checked against
//! the construction. [`synthesize`] turns a template into a tube mesh,
//! linear-blend skinning weights and a voxel latent.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Aabb, Vec3};
use crate::region::SkinningMatrix;
use crate::skeleton::{CleanSkeleton, RegionLabel, SemanticPartition, Skeleton};
use crate::voxel::SparseLatent;

/// Largest bounding-box side after normalization.
const FIT_EXTENT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKind {
    Quadruped,
    /// Quadruped with horns, a short tail and a heavier head.
    Ram,
    /// Two-legged runner with short arms and a long tail.
    Biped,
    /// Two legs and two wings.
    Winged,
    /// Plain chain, no limbs.
    Fish,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] =
        [TemplateKind::Quadruped, TemplateKind::Ram, TemplateKind::Biped, TemplateKind::Winged, TemplateKind::Fish];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Quadruped => "quadruped",
            TemplateKind::Ram => "ram",
            TemplateKind::Biped => "biped",
            TemplateKind::Winged => "winged",
            TemplateKind::Fish => "fish",
        }
    }

    /// Text prompt the fixture stands in for.
    pub fn prompt(self) -> &'static str {
        match self {
            TemplateKind::Quadruped => "a striped big cat standing on four legs",
            TemplateKind::Ram => "a mountain ram with curled horns",
            TemplateKind::Biped => "a small raptor dinosaur running on two legs",
            TemplateKind::Winged => "a winged bird-like creature with two legs",
            TemplateKind::Fish => "a long slender fish",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown template {s:?}"))
    }
}

/// Relative size factors, nominally 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportions {
    pub body: f64,
    pub leg: f64,
    pub width: f64,
    pub tail: f64,
    pub neck: f64,
}

impl Default for Proportions {
    fn default() -> Self {
        Self { body: 1.0, leg: 1.0, width: 1.0, tail: 1.0, neck: 1.0 }
    }
}

impl Proportions {
    /// Each factor uniform in `[0.9, 1.1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut f = || rng.random_range(0.9..=1.1);
        Self { body: f(), leg: f(), width: f(), tail: f(), neck: f() }
    }
}

/// One labeled joint group of a template. Limb groups exclude the body
/// joint they hang from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TruthGroup {
    pub label: RegionLabel,
    pub joints: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreatureTemplate {
    pub kind: TemplateKind,
    pub skeleton: Skeleton,
    pub truth: Vec<TruthGroup>,
    /// Short decorative branches that cleaning is expected to remove.
    pub stubs: Vec<BTreeSet<usize>>,
    /// Tube radius around each joint, for mesh and voxel synthesis.
    pub radii: Vec<f64>,
}

struct Builder {
    joints: Vec<Vec3>,
    bones: Vec<[usize; 2]>,
    radii: Vec<f64>,
    truth: Vec<TruthGroup>,
    stubs: Vec<BTreeSet<usize>>,
}

impl Builder {
    fn new() -> Self {
        Self { joints: Vec::new(), bones: Vec::new(), radii: Vec::new(), truth: Vec::new(), stubs: Vec::new() }
    }

    fn joint(&mut self, p: Vec3, r: f64) -> usize {
        self.joints.push(p);
        self.radii.push(r);
        self.joints.len() - 1
    }

    /// Chain of joints through `points`, starting with `start` (already placed).
    fn chain(&mut self, start: usize, points: &[Vec3], r: f64) -> Vec<usize> {
        let mut prev = start;
        let mut out = Vec::with_capacity(points.len());
        for p in points {
            let j = self.joint(*p, r);
            self.bones.push([prev, j]);
            out.push(j);
            prev = j;
        }
        out
    }

    /// Chain whose joints are offsets from the anchor position.
    fn limb(&mut self, label: RegionLabel, anchor: usize, offsets: &[Vec3], r: f64) -> Vec<usize> {
        let a = self.joints[anchor];
        let pts: Vec<Vec3> = offsets.iter().map(|o| a + o).collect();
        let js = self.chain(anchor, &pts, r);
        self.truth.push(TruthGroup { label, joints: js.iter().copied().collect() });
        js
    }

    fn finish(mut self, kind: TemplateKind, root: usize) -> CreatureTemplate {
        let b = Aabb::of(&self.joints).unwrap();
        let extent = (b.max - b.min).amax();
        let k = FIT_EXTENT / extent;
        let c = b.center();
        for p in &mut self.joints {
            *p = (*p - c) * k;
        }
        for r in &mut self.radii {
            *r *= k;
        }
        self.truth.sort();
        CreatureTemplate {
            kind,
            skeleton: Skeleton::new(self.joints, self.bones, root, None).expect("templates are valid"),
            truth: self.truth,
            stubs: self.stubs,
            radii: self.radii,
        }
    }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

impl CreatureTemplate {
    pub fn new(kind: TemplateKind, p: &Proportions) -> Self {
        match kind {
            TemplateKind::Quadruped => quadruped(p, false, kind),
            TemplateKind::Ram => quadruped(p, true, kind),
            TemplateKind::Biped => biped(p),
            TemplateKind::Winged => winged(p),
            TemplateKind::Fish => fish(p),
        }
    }

    /// Fixture version: nominal proportions, except the ram's stockier build.
    pub fn fixture(kind: TemplateKind) -> Self {
        let p = match kind {
            TemplateKind::Ram => Proportions { body: 0.95, leg: 0.85, width: 1.0, tail: 0.6, neck: 1.1 },
            _ => Proportions::default(),
        };
        Self::new(kind, &p)
    }

    /// Random proportions followed by joint jitter of up to
    /// `jitter_fraction` of the bounding-box diagonal.
    pub fn random(kind: TemplateKind, jitter_fraction: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Proportions::random(&mut rng);
        Self::new(kind, &p).jittered(jitter_fraction, &mut rng)
    }

    /// Adds two 2-joint stubs of total length `length` at the head tip.
    pub fn with_stubs(&self, length: f64) -> Self {
        let head = self.truth.iter().find(|g| g.label == RegionLabel::Head).expect("template has a head");
        let tip = *head.joints.iter().max().unwrap();
        let mut joints = self.skeleton.joints().to_vec();
        let mut bones = self.skeleton.bones().to_vec();
        let mut radii = self.radii.clone();
        let mut stubs = self.stubs.clone();
        for side in [1.0, -1.0] {
            let step = v(0.2, 1.0, 0.6 * side).normalize() * (length / 2.0);
            let a = joints.len();
            joints.push(joints[tip] + step);
            joints.push(joints[tip] + step * 2.0 + v(0.0, 0.0, 0.1 * length * side));
            radii.extend([radii[tip] * 0.3; 2]);
            bones.push([tip, a]);
            bones.push([a, a + 1]);
            stubs.push(BTreeSet::from([a, a + 1]));
        }
        Self {
            kind: self.kind,
            skeleton: Skeleton::new(joints, bones, self.skeleton.root(), None).unwrap(),
            truth: self.truth.clone(),
            stubs,
            radii,
        }
    }

    /// Moves every joint by an independent offset drawn uniformly from a
    /// ball of radius `fraction × diagonal`.
    pub fn jittered<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Self {
        let radius = fraction * self.skeleton.bounds().diagonal();
        let mut out = self.clone();
        out.skeleton = self.skeleton.map_joints(|p| {
            let offset = loop {
                let c = v(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                if c.norm_squared() <= 1.0 {
                    break c;
                }
            };
            p + offset * radius
        });
        out
    }

    /// Rigid rotation about the vertical axis through the origin.
    pub fn rotated_y(&self, angle_rad: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&Vec3::y_axis(), angle_rad);
        let mut out = self.clone();
        out.skeleton = self.skeleton.map_joints(|p| r * p);
        out
    }

    /// Compares a partition of the cleaned skeleton with the construction
    /// record, after mapping cleaned joints back to template joints.
    pub fn check_partition(&self, clean: &CleanSkeleton, partition: &SemanticPartition) -> Result<(), String> {
        let mut found: Vec<TruthGroup> = partition
            .regions
            .iter()
            .map(|r| TruthGroup {
                label: r.label,
                joints: r.joints.iter().flat_map(|&j| clean.original_joint_map[j].iter().copied()).collect(),
            })
            .collect();
        found.sort();
        if found == self.truth {
            return Ok(());
        }
        let describe =
            |gs: &[TruthGroup]| gs.iter().map(|g| format!("{}{:?}", g.label, g.joints)).collect::<Vec<_>>().join(" ");
        Err(format!("expected {} got {}", describe(&self.truth), describe(&found)))
    }
}

fn quadruped(p: &Proportions, horns: bool, kind: TemplateKind) -> CreatureTemplate {
    let mut b = Builder::new();
    let (fb, fl, fw, ft, fneck) = (p.body, p.leg, p.width, p.tail, p.neck);
    let pelvis = b.joint(v(-0.25 * fb, 0.05, 0.0), 0.07);
    let spine = b.chain(pelvis, &[v(-0.08 * fb, 0.08, 0.0), v(0.08 * fb, 0.09, 0.0), v(0.25 * fb, 0.12, 0.0)], 0.07);
    let shoulder = spine[2];
    let mut body = BTreeSet::from([pelvis]);
    body.extend(&spine);
    b.truth.push(TruthGroup { label: RegionLabel::Body, joints: body });
    for s in [1.0, -1.0] {
        b.limb(
            RegionLabel::Leg,
            pelvis,
            &[
                v(-0.02, -0.07, 0.12 * s * fw),
                v(0.03, -0.27 * fl, 0.20 * s * fw),
                v(-0.03, -0.41 * fl, 0.24 * s * fw),
                v(0.01, -0.51 * fl, 0.26 * s * fw),
            ],
            0.03,
        );
    }
    for s in [1.0, -1.0] {
        b.limb(
            RegionLabel::Leg,
            shoulder,
            &[
                v(0.02, -0.08, 0.12 * s * fw),
                v(0.05, -0.32 * fl, 0.20 * s * fw),
                v(0.02, -0.48 * fl, 0.24 * s * fw),
                v(0.06, -0.58 * fl, 0.26 * s * fw),
            ],
            0.03,
        );
    }
    b.limb(
        RegionLabel::Tail,
        pelvis,
        &[v(-0.11 * ft, 0.03, 0.0), v(-0.19 * ft, -0.03, 0.0), v(-0.24 * ft, -0.11, 0.0)],
        0.02,
    );
    let mut head_offsets = vec![
        v(0.08, 0.1 * fneck, 0.0),
        v(0.13, 0.19 * fneck, 0.0),
        v(0.2, 0.18 * fneck, 0.0),
        v(0.24, 0.12 * fneck, 0.0),
    ];
    if horns {
        // Longer muzzle so the tip branch past the horns is not mistaken for a stub.
        head_offsets.push(v(0.31, 0.07 * fneck, 0.0));
    }
    let head = b.limb(RegionLabel::Head, shoulder, &head_offsets, 0.045);
    if horns {
        // One horn per head joint keeps every head joint below degree 4.
        let mut horn_joints = Vec::new();
        for (crown, s) in [(head[1], 1.0), (head[2], -1.0)] {
            let c = b.joints[crown];
            let pts = [c + v(-0.04, 0.05, 0.05 * s), c + v(-0.09, 0.03, 0.08 * s), c + v(-0.08, -0.03, 0.09 * s)];
            horn_joints.extend(b.chain(crown, &pts, 0.015));
        }
        let group = b.truth.iter_mut().find(|g| g.label == RegionLabel::Head).unwrap();
        group.joints.extend(horn_joints);
    }
    b.finish(kind, pelvis)
}

fn winged(p: &Proportions) -> CreatureTemplate {
    let mut b = Builder::new();
    let (fb, fl, fw, fneck) = (p.body, p.leg, p.width, p.neck);
    let pelvis = b.joint(v(-0.15 * fb, 0.0, 0.0), 0.06);
    let spine = b.chain(pelvis, &[v(0.0, 0.06, 0.0), v(0.15 * fb, 0.1, 0.0)], 0.06);
    let chest = spine[1];
    let mut body = BTreeSet::from([pelvis]);
    body.extend(&spine);
    b.truth.push(TruthGroup { label: RegionLabel::Body, joints: body });
    for s in [1.0, -1.0] {
        b.limb(
            RegionLabel::Leg,
            pelvis,
            &[
                v(-0.02, -0.08 * fl, 0.09 * s * fw),
                v(0.07, -0.25 * fl, 0.11 * s * fw),
                v(-0.01, -0.40 * fl, 0.12 * s * fw),
                v(0.09, -0.47 * fl, 0.13 * s * fw),
            ],
            0.025,
        );
    }
    for s in [1.0, -1.0] {
        b.limb(
            RegionLabel::Wing,
            chest,
            &[
                v(-0.01, 0.06, 0.08 * s * fw),
                v(-0.13, 0.20, 0.20 * s * fw),
                v(-0.30, 0.28, 0.28 * s * fw),
                v(-0.53, 0.32, 0.32 * s * fw),
            ],
            0.02,
        );
    }
    b.limb(
        RegionLabel::Head,
        chest,
        &[v(0.11, 0.1 * fneck, 0.0), v(0.2, 0.22 * fneck, 0.0), v(0.29, 0.26 * fneck, 0.0), v(0.35, 0.21 * fneck, 0.0)],
        0.04,
    );
    b.finish(TemplateKind::Winged, pelvis)
}

fn biped(p: &Proportions) -> CreatureTemplate {
    let mut b = Builder::new();
    let (fb, fl, fw, ft, fneck) = (p.body, p.leg, p.width, p.tail, p.neck);
    let pelvis = b.joint(v(-0.1 * fb, 0.05, 0.0), 0.06);
    let spine = b.chain(pelvis, &[v(0.04 * fb, 0.1, 0.0), v(0.18 * fb, 0.14, 0.0)], 0.06);
    let chest = spine[1];
    let mut body = BTreeSet::from([pelvis]);
    body.extend(&spine);
    b.truth.push(TruthGroup { label: RegionLabel::Body, joints: body });
    for s in [1.0, -1.0] {
        b.limb(
            RegionLabel::Leg,
            pelvis,
            &[
                v(-0.02, -0.08 * fl, 0.08 * s * fw),
                v(0.06, -0.24 * fl, 0.10 * s * fw),
                v(-0.02, -0.38 * fl, 0.11 * s * fw),
                v(0.08, -0.44 * fl, 0.12 * s * fw),
            ],
            0.03,
        );
    }
    // Short forelimbs held above hip height read as wings to the labeling rules.
    for s in [1.0, -1.0] {
        b.limb(
            RegionLabel::Wing,
            chest,
            &[v(0.03, -0.02, 0.07 * s * fw), v(0.08, -0.06, 0.10 * s * fw), v(0.14, -0.04, 0.11 * s * fw)],
            0.015,
        );
    }
    b.limb(
        RegionLabel::Tail,
        pelvis,
        &[v(-0.12 * ft, 0.01, 0.0), v(-0.24 * ft, 0.0, 0.0), v(-0.36 * ft, -0.02, 0.0), v(-0.46 * ft, -0.03, 0.0)],
        0.025,
    );
    b.limb(
        RegionLabel::Head,
        chest,
        &[v(0.07, 0.08 * fneck, 0.0), v(0.13, 0.17 * fneck, 0.0), v(0.2, 0.2 * fneck, 0.0), v(0.27, 0.17 * fneck, 0.0)],
        0.035,
    );
    b.finish(TemplateKind::Biped, pelvis)
}

fn fish(p: &Proportions) -> CreatureTemplate {
    let mut b = Builder::new();
    let n = 8;
    let pts: Vec<Vec3> = (0..n)
        .map(|i| {
            let x = (-0.4 + 0.8 * i as f64 / (n - 1) as f64) * p.body;
            let y = if i % 2 == 0 { 0.03 } else { -0.03 };
            v(x, y, 0.0)
        })
        .collect();
    let first = b.joint(pts[0], 0.05);
    let rest = b.chain(first, &pts[1..], 0.05);
    let mut all = BTreeSet::from([first]);
    all.extend(rest);
    b.truth.push(TruthGroup { label: RegionLabel::Body, joints: all });
    b.finish(TemplateKind::Fish, 3)
}

/// Mesh, skinning and latent generated from a template.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAsset {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub skinning: SkinningMatrix,
    pub slat: SparseLatent,
}

const RING: usize = 8;
const RING_STEPS: usize = 4;

/// Tube mesh around every bone, skinned linearly to the bone's two joints,
/// and a solid voxelization of the same tubes at `resolution³`.
pub fn synthesize(t: &CreatureTemplate, resolution: u16, channels: u16) -> SyntheticAsset {
    let sk = &t.skeleton;
    let nj = sk.joint_count();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut weights = Vec::new();
    for &[a, b] in sk.bones() {
        let (pa, pb) = (sk.joints()[a], sk.joints()[b]);
        let r = t.radii[a].min(t.radii[b]);
        let axis = (pb - pa).try_normalize(1e-12).unwrap_or(Vec3::x());
        let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = axis.cross(&helper).normalize();
        let e2 = axis.cross(&e1);
        let base = vertices.len();
        for step in 0..=RING_STEPS {
            let s = step as f64 / RING_STEPS as f64;
            let center = pa + (pb - pa) * s;
            for k in 0..RING {
                let phi = std::f64::consts::TAU * k as f64 / RING as f64;
                vertices.push(center + (e1 * phi.cos() + e2 * phi.sin()) * r);
                let mut row = vec![0.0; nj];
                row[a] += 1.0 - s;
                row[b] += s;
                weights.extend(row);
            }
        }
        for step in 0..RING_STEPS {
            for k in 0..RING {
                let i0 = (base + step * RING + k) as u32;
                let i1 = (base + step * RING + (k + 1) % RING) as u32;
                let j0 = i0 + RING as u32;
                let j1 = i1 + RING as u32;
                faces.push([i0, i1, j1]);
                faces.push([i0, j1, j0]);
            }
        }
    }
    let skinning = SkinningMatrix::from_dense(vertices.len(), nj, weights, None).expect("rows sum to one");
    SyntheticAsset { vertices, faces, skinning, slat: voxelize(t, resolution, channels) }
}

fn voxelize(t: &CreatureTemplate, n: u16, channels: u16) -> SparseLatent {
    let sk = &t.skeleton;
    let nu = n as usize;
    let mut occ = vec![false; nu * nu * nu];
    let to_grid = |x: f64| (x + 0.5) * n as f64 - 0.5;
    for &[a, b] in sk.bones() {
        let (pa, pb) = (sk.joints()[a], sk.joints()[b]);
        let r = t.radii[a].min(t.radii[b]);
        let lo = pa.inf(&pb).add_scalar(-r);
        let hi = pa.sup(&pb).add_scalar(r);
        let range = |k: usize| {
            let l = to_grid(lo[k]).floor().max(0.0) as usize;
            let h = (to_grid(hi[k]).ceil().max(-1.0) as i64).min(nu as i64 - 1);
            l..=(h.max(l as i64 - 1) as usize)
        };
        let seg = pb - pa;
        let len2 = seg.norm_squared().max(1e-18);
        for x in range(0) {
            for y in range(1) {
                for z in range(2) {
                    let c = crate::voxel::to_canonical(&[x as u16, y as u16, z as u16], n);
                    let s = ((c - pa).dot(&seg) / len2).clamp(0.0, 1.0);
                    if (c - (pa + seg * s)).norm_squared() <= r * r {
                        occ[(x * nu + y) * nu + z] = true;
                    }
                }
            }
        }
    }
    let mut positions = Vec::new();
    let mut features = Vec::new();
    let phase = t.kind as usize as f64;
    for (i, _) in occ.iter().enumerate().filter(|(_, o)| **o) {
        let p = [(i / (nu * nu)) as u16, (i / nu % nu) as u16, (i % nu) as u16];
        let c = crate::voxel::to_canonical(&p, n);
        positions.push(p);
        for k in 0..channels as usize {
            let w = (k + 1) as f64;
            let f = (std::f64::consts::PI * w * (0.7 * c.x + 1.3 * c.y + 0.9 * c.z) + phase + k as f64).sin();
            features.push((0.5 * f) as f32);
        }
    }
    SparseLatent::new(n, channels, positions, features).expect("voxelization is in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{classify_regions, clean_skeleton, estimate_orientation, DEFAULT_PRUNE_FRACTION};

    fn classify_and_check(t: &CreatureTemplate) -> Result<(), String> {
        let clean = clean_skeleton(&t.skeleton, DEFAULT_PRUNE_FRACTION).map_err(|e| e.to_string())?;
        let frame = estimate_orientation(&clean).map_err(|e| e.to_string())?;
        let (partition, _) = classify_regions(&clean, &frame).map_err(|e| e.to_string())?;
        t.check_partition(&clean, &partition)
    }

    #[test]
    fn fixtures_classify_to_their_construction() {
        for kind in TemplateKind::ALL {
            classify_and_check(&CreatureTemplate::fixture(kind)).unwrap_or_else(|e| panic!("{kind}: {e}"));
        }
    }

    #[test]
    fn region_counts() {
        let count = |k, l| CreatureTemplate::fixture(k).truth.iter().filter(|g| g.label == l).count();
        assert_eq!(count(TemplateKind::Quadruped, RegionLabel::Leg), 4);
        assert_eq!(count(TemplateKind::Winged, RegionLabel::Wing), 2);
        assert_eq!(count(TemplateKind::Fish, RegionLabel::Body), 1);
        assert_eq!(CreatureTemplate::fixture(TemplateKind::Quadruped).truth.len(), 7);
    }

    #[test]
    fn stubs_are_pruned() {
        let t = CreatureTemplate::fixture(TemplateKind::Quadruped);
        let diag = t.skeleton.bounds().diagonal();
        let s = t.with_stubs(0.02 * diag);
        let clean = clean_skeleton(&s.skeleton, DEFAULT_PRUNE_FRACTION).unwrap();
        let mut pruned: Vec<BTreeSet<usize>> =
            clean.pruned_branches.iter().map(|b| b.iter().copied().collect()).collect();
        pruned.sort();
        let mut want = s.stubs.clone();
        want.sort();
        assert_eq!(pruned, want);
        classify_and_check(&s).unwrap();
    }

    #[test]
    fn fits_the_cube_and_is_deterministic() {
        for kind in TemplateKind::ALL {
            let t = CreatureTemplate::fixture(kind);
            let b = t.skeleton.bounds();
            assert!(b.min.amin() >= -0.41 && b.max.amax() <= 0.41, "{kind}");
            assert_eq!(CreatureTemplate::random(kind, 0.05, 7), CreatureTemplate::random(kind, 0.05, 7));
        }
    }

    #[test]
    fn synthetic_asset_shapes() {
        let t = CreatureTemplate::fixture(TemplateKind::Quadruped);
        let a = synthesize(&t, 32, 4);
        assert_eq!(a.skinning.vertex_count(), a.vertices.len());
        assert_eq!(a.skinning.joint_count(), t.skeleton.joint_count());
        for i in 0..a.vertices.len() {
            assert!((a.skinning.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(a.slat.len() > 100);
        assert_eq!(a.slat.channels(), 4);
        assert_eq!(synthesize(&t, 32, 4), a);
    }
}
