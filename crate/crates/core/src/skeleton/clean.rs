use std::collections::VecDeque;

use super::{Result, Skeleton, SkeletonError};
use crate::geometry::{Aabb, Vec3};

/// Default leaf-branch pruning threshold as a fraction of the bounding-box
/// diagonal.
pub const DEFAULT_PRUNE_FRACTION: f64 = 0.05;

/// Maximum deviation from straight, in degrees, for a degree-2 joint to be
/// considered redundant.
const COLLINEAR_TOLERANCE_DEG: f64 = 5.0;

/// A connected, simplified skeleton plus the bookkeeping needed to map
/// retained joints back to the original rig.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSkeleton {
    pub skeleton: Skeleton,
    /// For each retained joint, the sorted original joint indices it stands for.
    pub original_joint_map: Vec<Vec<usize>>,
    /// Original joints removed as small branches or minor components.
    pub pruned_branches: Vec<Vec<usize>>,
}

impl CleanSkeleton {
    /// Wraps an already-clean skeleton with an identity joint map.
    pub fn identity(skeleton: Skeleton) -> Self {
        let original_joint_map = (0..skeleton.joint_count()).map(|j| vec![j]).collect();
        Self { skeleton, original_joint_map, pruned_branches: Vec::new() }
    }
}

struct Work {
    pos: Vec<Vec3>,
    alive: Vec<bool>,
    bones: Vec<Option<[usize; 2]>>,
    rep: Vec<Vec<usize>>,
    root: usize,
    pruned: Vec<Vec<usize>>,
}

impl Work {
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.pos.len()];
        for (k, b) in self.bones.iter().enumerate() {
            if let Some([a, c]) = *b {
                adj[a].push((c, k));
                adj[c].push((a, k));
            }
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    fn diagonal(&self) -> f64 {
        Aabb::of(self.pos.iter().zip(&self.alive).filter(|(_, a)| **a).map(|(p, _)| p)).map_or(0.0, |b| b.diagonal())
    }

    fn depths(&self, adj: &[Vec<(usize, usize)>]) -> Vec<usize> {
        let mut depth = vec![usize::MAX; self.pos.len()];
        depth[self.root] = 0;
        let mut q = VecDeque::from([self.root]);
        while let Some(u) = q.pop_front() {
            for &(w, _) in &adj[u] {
                if depth[w] == usize::MAX {
                    depth[w] = depth[u] + 1;
                    q.push_back(w);
                }
            }
        }
        depth
    }

    /// Leaf-to-junction paths: joints from the leaf inward (junction
    /// excluded) and their summed bone length. Chains without a junction
    /// are not branches.
    fn leaf_branches(&self, adj: &[Vec<(usize, usize)>]) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        for leaf in 0..self.pos.len() {
            if !self.alive[leaf] || adj[leaf].len() != 1 {
                continue;
            }
            let mut path = vec![leaf];
            let mut length = 0.0;
            let (mut prev, mut cur) = (leaf, adj[leaf][0].0);
            loop {
                length += (self.pos[cur] - self.pos[prev]).norm();
                match adj[cur].len() {
                    2 => {
                        path.push(cur);
                        let next = adj[cur].iter().map(|e| e.0).find(|&w| w != prev).unwrap();
                        prev = cur;
                        cur = next;
                    }
                    1 => break,
                    _ => {
                        out.push((path, length));
                        break;
                    }
                }
            }
        }
        out
    }

    fn prune_pass(&mut self, prune_fraction: f64) -> bool {
        let threshold = prune_fraction * self.diagonal();
        let adj = self.adjacency();
        let doomed: Vec<Vec<usize>> = self
            .leaf_branches(&adj)
            .into_iter()
            .filter(|(path, len)| *len < threshold && !path.contains(&self.root))
            .map(|(path, _)| path)
            .collect();
        let removed: usize = doomed.iter().map(Vec::len).sum();
        if doomed.is_empty() || self.alive_count() - removed < 2 {
            return false;
        }
        for path in doomed {
            let mut originals = Vec::new();
            for &j in &path {
                self.alive[j] = false;
                originals.append(&mut self.rep[j]);
            }
            originals.sort_unstable();
            self.pruned.push(originals);
        }
        for b in &mut self.bones {
            if let Some([x, y]) = *b {
                if !self.alive[x] || !self.alive[y] {
                    *b = None;
                }
            }
        }
        true
    }

    /// Removes one redundant degree-2 joint, if any. Its original joints are
    /// handed to the neighbor farther from the root.
    fn collapse_one(&mut self) -> bool {
        let adj = self.adjacency();
        let diag = self.diagonal();
        let cos_tol = COLLINEAR_TOLERANCE_DEG.to_radians().cos();
        for v in 0..self.pos.len() {
            if !self.alive[v] || v == self.root || adj[v].len() != 2 {
                continue;
            }
            let (a, bone_a) = adj[v][0];
            let (c, bone_c) = adj[v][1];
            if adj[a].iter().any(|e| e.0 == c) {
                continue;
            }
            let u = self.pos[v] - self.pos[a];
            let w = self.pos[c] - self.pos[v];
            let tiny = 1e-12 * diag.max(f64::MIN_POSITIVE);
            let straight = u.norm() <= tiny || w.norm() <= tiny || u.dot(&w) >= cos_tol * u.norm() * w.norm();
            if !straight {
                continue;
            }
            let depth = self.depths(&adj);
            let heir = if depth[a] > depth[c] { a } else { c };
            let mut moved = std::mem::take(&mut self.rep[v]);
            self.rep[heir].append(&mut moved);
            self.rep[heir].sort_unstable();
            self.alive[v] = false;
            let (keep, drop, other) = if bone_a < bone_c { (bone_a, bone_c, c) } else { (bone_c, bone_a, a) };
            let [x, y] = self.bones[keep].unwrap();
            self.bones[keep] = Some(if x == v { [other, y] } else { [x, other] });
            self.bones[drop] = None;
            return true;
        }
        false
    }
}

/// Keeps the largest connected component, removes redundant straight-line
/// joints and prunes leaf branches shorter than `prune_fraction` of the
/// bounding-box diagonal. Iterates to a fixpoint, so cleaning is idempotent.
pub fn clean_skeleton(s: &Skeleton, prune_fraction: f64) -> Result<CleanSkeleton> {
    if !(0.0..0.5).contains(&prune_fraction) {
        return Err(SkeletonError::InvalidParameter(format!("prune_fraction {prune_fraction} outside [0, 0.5)")));
    }
    if s.bones().is_empty() {
        return Err(SkeletonError::EmptySkeleton);
    }
    if s.bounds().diagonal() <= 0.0 {
        return Err(SkeletonError::DegenerateGeometry("all joints coincide".into()));
    }

    let n = s.joint_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &[a, b] in s.bones() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let comp: Vec<usize> = (0..n).map(|j| find(&mut parent, j)).collect();
    let mut size = vec![0usize; n];
    for &c in &comp {
        size[c] += 1;
    }
    // First component (by lowest joint) among the largest.
    let keep = (0..n).map(|j| comp[j]).max_by_key(|&c| (size[c], std::cmp::Reverse(c))).unwrap();

    let mut work = Work {
        pos: s.joints().to_vec(),
        alive: comp.iter().map(|&c| c == keep).collect(),
        bones: s.bones().iter().map(|&b| Some(b)).collect(),
        rep: (0..n).map(|j| vec![j]).collect(),
        root: s.root(),
        pruned: Vec::new(),
    };
    let mut minor: Vec<usize> = (0..n).filter(|&j| comp[j] != keep).collect();
    minor.sort_by_key(|&j| (comp[j], j));
    for group in minor.chunk_by(|a, b| comp[*a] == comp[*b]) {
        let mut g: Vec<usize> = group.to_vec();
        for &j in &g {
            work.rep[j].clear();
        }
        g.sort_unstable();
        work.pruned.push(g);
    }
    for b in &mut work.bones {
        if let Some([x, _]) = *b {
            if comp[x] != keep {
                *b = None;
            }
        }
    }
    if !work.alive[work.root] {
        let r = s.joints()[s.root()];
        work.root = (0..n)
            .filter(|&j| work.alive[j])
            .min_by(|&a, &b| {
                let da = (s.joints()[a] - r).norm_squared();
                let db = (s.joints()[b] - r).norm_squared();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
    }

    loop {
        let pruned = work.prune_pass(prune_fraction);
        let mut collapsed = false;
        while work.collapse_one() {
            collapsed = true;
        }
        if !pruned && !collapsed {
            break;
        }
    }

    let mut new_index = vec![usize::MAX; n];
    let mut joints = Vec::new();
    let mut names = s.names().map(|_| Vec::new());
    let mut original_joint_map = Vec::new();
    for j in 0..n {
        if work.alive[j] {
            new_index[j] = joints.len();
            joints.push(work.pos[j]);
            if let (Some(out), Some(src)) = (names.as_mut(), s.names()) {
                out.push(src[j].clone());
            }
            original_joint_map.push(std::mem::take(&mut work.rep[j]));
        }
    }
    let bones = work.bones.iter().flatten().map(|&[a, b]| [new_index[a], new_index[b]]).collect();
    let skeleton = Skeleton::new(joints, bones, new_index[work.root], names)?;
    Ok(CleanSkeleton { skeleton, original_joint_map, pruned_branches: work.pruned })
}
