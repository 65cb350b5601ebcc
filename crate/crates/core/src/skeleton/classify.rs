use std::collections::{BTreeSet, VecDeque};

use super::{CleanSkeleton, OrientationFrame, Region, RegionLabel, Result, SemanticPartition, SkeletonError};
use crate::geometry::Vec3;

/// Tolerances of the classification heuristics, relative to the skeleton's
/// own extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    /// A tail tip counts as centered when its lateral offset from the joint
    /// centroid is below this fraction of the lateral extent.
    pub tail_center_fraction: f64,
    /// Two limbs are mirror images when the reflected tip of one lands within
    /// this fraction of the bounding-box diagonal of the other's tip.
    pub symmetry_fraction: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self { tail_center_fraction: 0.15, symmetry_fraction: 0.1 }
    }
}

/// Pelvis-like starting joint: the root when it branches (degree ≥ 3),
/// otherwise its highest-degree neighbor, lowest index on ties.
pub fn select_begin_node(s: &CleanSkeleton) -> usize {
    let sk = &s.skeleton;
    let deg = sk.degrees();
    let r = sk.root();
    if deg[r] >= 3 {
        return r;
    }
    let adj = sk.adjacency();
    let mut best: Option<usize> = None;
    for &(u, _) in &adj[r] {
        match best {
            Some(b) if deg[u] < deg[b] || (deg[u] == deg[b] && u > b) => {}
            _ => best = Some(u),
        }
    }
    best.unwrap_or(r)
}

/// Junction with degree ≥ 4 minimizing the projection on `frame.forward`;
/// falls back to degree ≥ 3 joints other than `b`. Lowest index wins ties.
pub fn find_trunk_junction(s: &CleanSkeleton, frame: &OrientationFrame, b: usize) -> Option<usize> {
    let sk = &s.skeleton;
    let deg = sk.degrees();
    let argmin = |pred: &dyn Fn(usize) -> bool| {
        let mut best: Option<(usize, f64)> = None;
        for (j, p) in sk.joints().iter().enumerate() {
            if !pred(j) {
                continue;
            }
            let proj = p.dot(&frame.forward);
            if best.is_none_or(|(_, bp)| proj < bp) {
                best = Some((j, proj));
            }
        }
        best.map(|(j, _)| j)
    };
    argmin(&|j| deg[j] >= 4).or_else(|| argmin(&|j| deg[j] >= 3 && j != b))
}

/// Labels the cleaned skeleton with body, leg, wing, tail and head regions.
///
/// Both signs of `frame.forward` are tried; the one satisfying more rules
/// wins (head +2, posterior tail +1, +1 per mirrored limb pair), the
/// `+x`-leaning sign on ties. The returned frame carries the chosen sign.
pub fn classify_regions(s: &CleanSkeleton, frame: &OrientationFrame) -> Result<(SemanticPartition, OrientationFrame)> {
    classify_regions_with(s, frame, &ClassifyConfig::default())
}

pub fn classify_regions_with(
    s: &CleanSkeleton,
    frame: &OrientationFrame,
    cfg: &ClassifyConfig,
) -> Result<(SemanticPartition, OrientationFrame)> {
    let ctx = Context::new(s);
    let b = select_begin_node(s);
    let first = if frame.leans_positive() { *frame } else { frame.flipped() };
    let mut best: Option<(SemanticPartition, OrientationFrame, u32)> = None;
    let mut failure = None;
    for hyp in [first, first.flipped()] {
        match ctx.evaluate(s, &hyp, b, cfg) {
            Ok((partition, score)) => {
                if best.as_ref().is_none_or(|(_, _, s)| score > *s) {
                    best = Some((partition, hyp, score));
                }
            }
            Err(e) => failure = Some(e),
        }
    }
    match best {
        Some((p, f, _)) => Ok((p, f)),
        None => Err(failure.expect("one hypothesis ran")),
    }
}

struct Subtree {
    anchor: usize,
    joints: BTreeSet<usize>,
    bones: BTreeSet<usize>,
    tip: usize,
}

struct Context {
    pos: Vec<Vec3>,
    adj: Vec<Vec<(usize, usize)>>,
    diag: f64,
    centroid: Vec3,
}

impl Context {
    fn new(s: &CleanSkeleton) -> Self {
        let sk = &s.skeleton;
        let pos = sk.joints().to_vec();
        let centroid = pos.iter().sum::<Vec3>() / pos.len() as f64;
        Self { adj: sk.adjacency(), diag: sk.bounds().diagonal(), centroid, pos }
    }

    fn evaluate(
        &self,
        s: &CleanSkeleton,
        frame: &OrientationFrame,
        b: usize,
        cfg: &ClassifyConfig,
    ) -> Result<(SemanticPartition, u32)> {
        let n_bones = s.skeleton.bones().len();
        // The junction rule picks the extreme junction against the search direction, so the
        // search runs along the posterior axis to land on the anterior junction.
        let junction = find_trunk_junction(s, &frame.flipped(), b);
        let d = match junction {
            Some(d) => d,
            None => {
                let branches = self.leaf_branches(b);
                if self.mirrored_pairs(&branches, frame, b, cfg).iter().all(|&(i, j)| {
                    self.pos[branches[i].tip].y >= self.pos[b].y || self.pos[branches[j].tip].y >= self.pos[b].y
                }) {
                    return Ok((degenerate(s, b, n_bones), 0));
                }
                b
            }
        };

        let (path_joints, path_bones) = self.path(b, d);
        let on_path: BTreeSet<usize> = path_joints.iter().copied().collect();
        let subtrees = self.hanging_subtrees(&path_joints, &on_path);
        let pairs = self.mirrored_pairs(&subtrees, frame, b, cfg);
        let by = self.pos[b].y;

        let mut label: Vec<Option<RegionLabel>> = vec![None; subtrees.len()];
        let mut paired = vec![false; subtrees.len()];
        let mut score = 0;
        for &(i, j) in &pairs {
            paired[i] = true;
            paired[j] = true;
            let (ti, tj) = (self.pos[subtrees[i].tip].y, self.pos[subtrees[j].tip].y);
            let l = if subtrees[i].anchor == d && subtrees[j].anchor == d {
                Some(if (ti + tj) * 0.5 >= by { RegionLabel::Wing } else { RegionLabel::Leg })
            } else if ti < by && tj < by {
                Some(RegionLabel::Leg)
            } else {
                None
            };
            if l.is_some() {
                score += 1;
            }
            label[i] = l;
            label[j] = l;
        }

        let lateral_extent = {
            let (lo, hi) = self
                .pos
                .iter()
                .map(|p| p.dot(&frame.lateral))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        };
        let center_tol = (cfg.tail_center_fraction * lateral_extent).max(1e-12);
        let bpos = self.pos[b];
        let tail = (0..subtrees.len())
            .filter(|&i| !paired[i])
            .filter_map(|i| {
                let tip = self.pos[subtrees[i].tip];
                let centered = (tip - self.centroid).dot(&frame.lateral).abs() < center_tol;
                let along = (tip - bpos).dot(&frame.forward);
                (centered && along < 0.0).then_some((i, along))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
        if let Some(t) = tail {
            label[t] = Some(RegionLabel::Tail);
            score += 1;
        }

        let head_candidates: Vec<usize> =
            (0..subtrees.len()).filter(|&i| !paired[i] && Some(i) != tail && subtrees[i].anchor == d).collect();
        match head_candidates.len() {
            0 => {}
            1 => {
                label[head_candidates[0]] = Some(RegionLabel::Head);
                score += 2;
            }
            k => return Err(SkeletonError::ClassificationAmbiguous(k)),
        }

        let mut regions =
            vec![Region { label: RegionLabel::Body, instance: 0, joints: on_path, bones: path_bones, anchor: None }];
        for wanted in [RegionLabel::Leg, RegionLabel::Wing, RegionLabel::Tail, RegionLabel::Head] {
            let mut members: Vec<&Subtree> =
                (0..subtrees.len()).filter(|&i| label[i] == Some(wanted)).map(|i| &subtrees[i]).collect();
            members.sort_by_key(|t| t.joints.first().copied());
            for (k, t) in members.into_iter().enumerate() {
                regions.push(Region {
                    label: wanted,
                    instance: k as u32,
                    joints: t.joints.clone(),
                    bones: t.bones.clone(),
                    anchor: Some(t.anchor),
                });
            }
        }
        Ok((SemanticPartition { regions, begin_node: b, trunk_junction: junction }, score))
    }

    /// Joints and bones on the BFS path from `from` to `to`.
    fn path(&self, from: usize, to: usize) -> (Vec<usize>, BTreeSet<usize>) {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.pos.len()];
        let mut seen = vec![false; self.pos.len()];
        seen[from] = true;
        let mut q = VecDeque::from([from]);
        while let Some(u) = q.pop_front() {
            if u == to {
                break;
            }
            for &(w, bone) in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    prev[w] = Some((u, bone));
                    q.push_back(w);
                }
            }
        }
        let mut joints = vec![to];
        let mut bones = BTreeSet::new();
        let mut cur = to;
        while let Some((p, bone)) = prev[cur] {
            bones.insert(bone);
            joints.push(p);
            cur = p;
        }
        joints.reverse();
        (joints, bones)
    }

    /// Everything hanging off the body path, one subtree per departing bone.
    fn hanging_subtrees(&self, path: &[usize], on_path: &BTreeSet<usize>) -> Vec<Subtree> {
        let mut visited = vec![false; self.pos.len()];
        for &j in path {
            visited[j] = true;
        }
        let mut out = Vec::new();
        for &anchor in path {
            for &(start, first_bone) in &self.adj[anchor] {
                if visited[start] || on_path.contains(&start) {
                    continue;
                }
                out.push(self.grow(anchor, start, first_bone, &mut visited));
            }
        }
        out
    }

    fn grow(&self, anchor: usize, start: usize, first_bone: usize, visited: &mut [bool]) -> Subtree {
        let mut joints = BTreeSet::from([start]);
        let mut bones = BTreeSet::from([first_bone]);
        let mut dist = vec![(start, (self.pos[start] - self.pos[anchor]).norm())];
        visited[start] = true;
        let mut q = VecDeque::from([(start, dist[0].1)]);
        while let Some((u, du)) = q.pop_front() {
            for &(w, bone) in &self.adj[u] {
                if w == anchor {
                    continue;
                }
                if !visited[w] {
                    visited[w] = true;
                    joints.insert(w);
                    bones.insert(bone);
                    let dw = du + (self.pos[w] - self.pos[u]).norm();
                    dist.push((w, dw));
                    q.push_back((w, dw));
                } else if joints.contains(&w) {
                    bones.insert(bone);
                }
            }
        }
        let tip = dist.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))).map(|t| t.0).unwrap();
        Subtree { anchor, joints, bones, tip }
    }

    /// Leaf-to-junction branches, used only to detect legs when no trunk
    /// junction exists.
    fn leaf_branches(&self, b: usize) -> Vec<Subtree> {
        let mut out = Vec::new();
        for leaf in 0..self.pos.len() {
            if self.adj[leaf].len() != 1 || leaf == b {
                continue;
            }
            let mut joints = BTreeSet::from([leaf]);
            let mut bones = BTreeSet::new();
            let (mut prev, (mut cur, mut bone)) = (leaf, self.adj[leaf][0]);
            loop {
                bones.insert(bone);
                if self.adj[cur].len() != 2 || cur == b {
                    break;
                }
                joints.insert(cur);
                let &(next, nb) = self.adj[cur].iter().find(|e| e.0 != prev).unwrap();
                prev = cur;
                cur = next;
                bone = nb;
            }
            if self.adj[cur].len() >= 3 || cur == b {
                out.push(Subtree { anchor: cur, joints, bones, tip: leaf });
            }
        }
        out
    }

    /// Greedy closest-first matching of subtrees whose tips mirror each other
    /// across the (forward, up) plane through `b`.
    fn mirrored_pairs(
        &self,
        subtrees: &[Subtree],
        frame: &OrientationFrame,
        b: usize,
        cfg: &ClassifyConfig,
    ) -> Vec<(usize, usize)> {
        let origin = self.pos[b];
        let n = frame.lateral;
        let tol = cfg.symmetry_fraction * self.diag;
        let mut cands = Vec::new();
        for i in 0..subtrees.len() {
            let ti = self.pos[subtrees[i].tip];
            let si = (ti - origin).dot(&n);
            let reflected = ti - 2.0 * si * n;
            for (j, sj) in subtrees.iter().enumerate().skip(i + 1) {
                let tj = self.pos[sj.tip];
                if si * (tj - origin).dot(&n) >= 0.0 {
                    continue;
                }
                let dist = (reflected - tj).norm();
                if dist <= tol {
                    cands.push((dist, i, j));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut used = vec![false; subtrees.len()];
        let mut pairs = Vec::new();
        for (_, i, j) in cands {
            if !used[i] && !used[j] {
                used[i] = true;
                used[j] = true;
                pairs.push((i, j));
            }
        }
        pairs
    }
}

fn degenerate(s: &CleanSkeleton, b: usize, n_bones: usize) -> SemanticPartition {
    SemanticPartition {
        regions: vec![Region {
            label: RegionLabel::Body,
            instance: 0,
            joints: (0..s.skeleton.joint_count()).collect(),
            bones: (0..n_bones).collect(),
            anchor: None,
        }],
        begin_node: b,
        trunk_junction: None,
    }
}
