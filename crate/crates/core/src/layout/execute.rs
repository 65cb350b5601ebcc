//! Plan validation, copy placement and execution.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{apply_op, find_asset, AssemblyPlan, ClassifiedAsset, LayoutError, Part, RegionRef, Result};
use crate::geometry::{Aabb, Affine3, Vec3};
use crate::skeleton::{OrientationFrame, RegionLabel, Skeleton};

/// Half-width of the box every placed joint must stay inside.
const PLACEMENT_LIMIT: f64 = 1.0;
/// Copies are spaced at least this fraction of the part's diagonal apart.
const MIN_WIDTH_FRACTION: f64 = 0.25;

/// Rigid placements for `n` copies of a part.
///
/// With `symmetric`, copies come in mirrored pairs at lateral offsets
/// `±k·width` about the part's own mid-plane, preceded by the untouched part
/// when `n` is odd; the second copy of each pair is the mirror image of the
/// first. Otherwise copies are stacked at offsets `0, width, 2·width, …`.
pub fn copy_placements(joints: &[Vec3], n: u32, frame: &OrientationFrame, symmetric: bool) -> Vec<Affine3> {
    if n <= 1 || joints.is_empty() {
        return vec![Affine3::identity(); n.max(1) as usize];
    }
    let l = frame.lateral;
    let (lo, hi) =
        joints.iter().map(|p| p.dot(&l)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let diag = Aabb::of(joints).map_or(0.0, |b| b.diagonal());
    let width = (hi - lo).max(MIN_WIDTH_FRACTION * diag).max(1e-6);
    if !symmetric {
        return (0..n).map(|k| Affine3::translation(l * (k as f64 * width))).collect();
    }
    let mid_point = l * ((lo + hi) * 0.5);
    let mirror = Affine3::reflection(&mid_point, &l);
    let mut out = Vec::with_capacity(n as usize);
    if n % 2 == 1 {
        out.push(Affine3::identity());
    }
    for k in 1..=n / 2 {
        let a = Affine3::translation(l * (k as f64 * width));
        out.push(a);
        out.push(mirror.after(&a));
    }
    out
}

/// Joint lists for `n` symmetric copies of a part.
pub fn instantiate_copies(joints: &[Vec3], n: u32, frame: &OrientationFrame) -> Vec<Vec<Vec3>> {
    copy_placements(joints, n, frame, true).iter().map(|t| joints.iter().map(|p| t.apply(p)).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointProvenance {
    pub part: RegionRef,
    pub copy: u32,
    pub source_joint: usize,
}

/// Accumulated placement of one part copy, mapping source coordinates to
/// assembled coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartTransform {
    pub part: RegionRef,
    pub copy: u32,
    pub transform: Affine3,
    /// Range of merged joint indices holding this copy.
    pub first_joint: usize,
    pub joint_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSkeleton {
    pub skeleton: Skeleton,
    pub provenance: Vec<JointProvenance>,
    pub transforms: Vec<PartTransform>,
}

impl AssembledSkeleton {
    /// Largest distance between a merged joint and its source joint mapped by
    /// the recorded copy transform.
    pub fn provenance_error(&self, assets: &[ClassifiedAsset]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, p) in self.provenance.iter().enumerate() {
            let asset = find_asset(assets, &p.part.asset)?;
            let t = self
                .transforms
                .iter()
                .find(|t| t.part == p.part && t.copy == p.copy)
                .ok_or_else(|| LayoutError::UnknownRegion(p.part.to_string()))?;
            let src = asset.skeleton().joints()[p.source_joint];
            worst = worst.max((t.transform.apply(&src) - self.skeleton.joints()[i]).norm());
        }
        Ok(worst)
    }
}

pub(crate) struct PlacedPart {
    pub part: Part,
    /// Per copy: placement and placed joints.
    pub copies: Vec<(Affine3, Vec<Vec3>)>,
}

/// Frame used for copy placement: the frame of the asset supplying the body.
fn plan_frame(plan: &AssemblyPlan, assets: &[ClassifiedAsset]) -> Option<OrientationFrame> {
    let base = plan.parts.iter().find(|p| p.region == RegionLabel::Body).or(plan.parts.first())?;
    find_asset(assets, &base.asset).ok().map(|a| a.frame)
}

/// Applies every op in order, then places copies. Parts that cannot be
/// resolved come back as `None`.
pub(crate) fn place_parts(plan: &AssemblyPlan, assets: &[ClassifiedAsset]) -> Result<Vec<Option<PlacedPart>>> {
    let frame = plan_frame(plan, assets);
    let mut out = Vec::with_capacity(plan.parts.len());
    for pp in &plan.parts {
        let Some(part) = find_asset(assets, &pp.asset).ok().and_then(|a| a.part(pp.region_ref().key).ok()) else {
            out.push(None);
            continue;
        };
        let target = pp.region_ref();
        let mut joints = part.joints.clone();
        let mut acc = Affine3::identity();
        for op in plan.ops.iter().filter(|op| *op.target() == target) {
            joints = apply_op(&joints, op)?;
            acc = op.to_affine().after(&acc);
        }
        let frame = frame.unwrap_or(OrientationFrame { forward: Vec3::x(), up: Vec3::y(), lateral: -Vec3::z() });
        let copies = copy_placements(&joints, pp.copies, &frame, pp.symmetric)
            .into_iter()
            .map(|c| (c.after(&acc), joints.iter().map(|p| c.apply(p)).collect()))
            .collect();
        out.push(Some(PlacedPart { part, copies }));
    }
    Ok(out)
}

/// Copy pairs joined by one attachment: a single copy on either side links
/// to every copy on the other, equal counts pair up by index.
fn copy_pairs(from: u32, to: u32) -> Option<Vec<(u32, u32)>> {
    if from == 1 {
        Some((0..to).map(|j| (0, j)).collect())
    } else if to == 1 {
        Some((0..from).map(|i| (i, 0)).collect())
    } else if from == to {
        Some((0..from).map(|i| (i, i)).collect())
    } else {
        None
    }
}

/// Every problem with `plan`, in a stable order. Empty means valid.
pub fn validate_plan(plan: &AssemblyPlan, assets: &[ClassifiedAsset]) -> Vec<String> {
    let mut v = Vec::new();
    let mut seen = BTreeSet::new();
    let mut sizes: Vec<Option<usize>> = Vec::with_capacity(plan.parts.len());
    for pp in &plan.parts {
        let r = pp.region_ref();
        if !seen.insert(r.clone()) {
            v.push(format!("part {r} declared twice"));
        }
        if pp.copies < 1 {
            v.push(format!("part {r} has no copies"));
        }
        match find_asset(assets, &pp.asset) {
            Err(_) => {
                v.push(format!("part {r} names unknown asset {:?}", pp.asset));
                sizes.push(None);
            }
            Ok(a) => match a.part(r.key) {
                Ok(p) => sizes.push(Some(p.joints.len())),
                Err(_) => {
                    v.push(format!("asset {:?} has no region {}", pp.asset, r.key));
                    sizes.push(None);
                }
            },
        }
    }
    let bodies = plan.parts.iter().filter(|p| p.region == RegionLabel::Body).count();
    if bodies != 1 {
        v.push(format!("expected exactly one body part, found {bodies}"));
    }
    for op in &plan.ops {
        if plan.part_index(op.target()).is_none() {
            v.push(format!("op targets undeclared part {}", op.target()));
        }
        if let Err(e) = op.validate() {
            v.push(e);
        }
    }

    let mut parent: Vec<usize> = (0..plan.parts.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut cycle = false;
    for a in &plan.attachments {
        let (from, to) = match (plan.resolve(&a.from), plan.resolve(&a.to)) {
            (Ok(f), Ok(t)) => (f, t),
            (f, t) => {
                v.extend(f.err());
                v.extend(t.err());
                continue;
            }
        };
        for (end, (p, j)) in [(&a.from, from), (&a.to, to)] {
            if let Some(n) = sizes[p] {
                if j >= n {
                    v.push(format!("{end} is past the part's {n} joints"));
                }
            }
        }
        if from.0 == to.0 {
            v.push(format!("attachment {} -> {} stays inside one part", a.from, a.to));
            continue;
        }
        let (cf, ct) = (plan.parts[from.0].copies, plan.parts[to.0].copies);
        if copy_pairs(cf, ct).is_none() {
            v.push(format!("attachment {} -> {} joins {cf} copies to {ct}", a.from, a.to));
        }
        let (rf, rt) = (find(&mut parent, from.0), find(&mut parent, to.0));
        if rf == rt {
            cycle = true;
        } else {
            parent[rf] = rt;
        }
    }
    if cycle {
        v.push("attachment cycle".to_string());
    }
    let roots: BTreeSet<usize> = (0..plan.parts.len()).map(|i| find(&mut parent, i)).collect();
    if roots.len() > 1 {
        v.push(format!("attachment graph has {} separate groups", roots.len()));
    }

    if v.is_empty() {
        match place_parts(plan, assets) {
            Err(e) => v.push(e.to_string()),
            Ok(placed) => {
                let all: Vec<Vec3> =
                    placed.iter().flatten().flat_map(|p| p.copies.iter().flat_map(|c| c.1.iter().copied())).collect();
                if let Some(b) = Aabb::of(&all) {
                    if b.min.amin() < -PLACEMENT_LIMIT - 1e-9 || b.max.amax() > PLACEMENT_LIMIT + 1e-9 {
                        v.push("bounding box exceeds twice the canonical cube".to_string());
                    }
                }
            }
        }
    }
    v
}

/// Runs a plan: edits in order, then copies, then attachment bones.
pub fn execute_plan(plan: &AssemblyPlan, assets: &[ClassifiedAsset]) -> Result<AssembledSkeleton> {
    let violations = validate_plan(plan, assets);
    if !violations.is_empty() {
        return Err(LayoutError::PlanRejected(violations));
    }
    let placed: Vec<PlacedPart> = place_parts(plan, assets)?.into_iter().map(|p| p.expect("validated")).collect();

    let mut joints = Vec::new();
    let mut bones = Vec::new();
    let mut provenance = Vec::new();
    let mut transforms = Vec::new();
    let mut offsets: Vec<Vec<usize>> = Vec::with_capacity(placed.len());
    for p in &placed {
        let r = p.part.region_ref();
        let mut mine = Vec::with_capacity(p.copies.len());
        for (c, (t, pts)) in p.copies.iter().enumerate() {
            let first = joints.len();
            mine.push(first);
            joints.extend_from_slice(pts);
            bones.extend(p.part.bones.iter().map(|[a, b]| [first + a, first + b]));
            provenance.extend(p.part.source_joints.iter().map(|&s| JointProvenance {
                part: r.clone(),
                copy: c as u32,
                source_joint: s,
            }));
            transforms.push(PartTransform {
                part: r.clone(),
                copy: c as u32,
                transform: *t,
                first_joint: first,
                joint_count: pts.len(),
            });
        }
        offsets.push(mine);
    }
    for a in &plan.attachments {
        let ((pf, jf), (pt, jt)) = (plan.resolve(&a.from).expect("validated"), plan.resolve(&a.to).expect("validated"));
        let pairs = copy_pairs(plan.parts[pf].copies, plan.parts[pt].copies).expect("validated");
        for (cf, ct) in pairs {
            bones.push([offsets[pf][cf as usize] + jf, offsets[pt][ct as usize] + jt]);
        }
    }

    let body = plan.parts.iter().position(|p| p.region == RegionLabel::Body).expect("validated");
    let base = find_asset(assets, &plan.parts[body].asset)?;
    let b = base.partition.begin_node;
    let root = offsets[body][0] + placed[body].part.source_joints.binary_search(&b).unwrap_or(0);
    let skeleton = Skeleton::new(joints, bones, root, None)?;
    if !connected(&skeleton) {
        return Err(LayoutError::DisconnectedResult);
    }
    Ok(AssembledSkeleton { skeleton, provenance, transforms })
}

fn connected(s: &Skeleton) -> bool {
    let adj = s.adjacency();
    let mut seen = vec![false; s.joint_count()];
    let mut stack = vec![s.root()];
    seen[s.root()] = true;
    while let Some(u) = stack.pop() {
        for &(w, _) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|x| x)
}
