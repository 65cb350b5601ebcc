//! Creature skeletons: loading, cleaning, orientation and semantic
//! classification into body, legs, wings, tail and head.

mod classify;
mod clean;
mod orient;

pub use classify::{classify_regions, find_trunk_junction, select_begin_node, ClassifyConfig};
pub use clean::{clean_skeleton, CleanSkeleton, DEFAULT_PRUNE_FRACTION};
pub use orient::{estimate_orientation, OrientationFrame};

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("invalid skeleton: {0}")]
    Invalid(String),
    #[error("skeleton has no bones")]
    EmptySkeleton,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("classification ambiguous: {0} branches compete for the head")]
    ClassificationAmbiguous(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("skeleton json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SkeletonError> = std::result::Result<T, E>;

/// Joint positions connected by bones, with a designated root joint.
///
/// Coordinates live in the canonical cube `[-0.5, 0.5]³` with `+y` up.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Vec3>,
    bones: Vec<[usize; 2]>,
    root: usize,
    names: Option<Vec<String>>,
}

impl Skeleton {
    pub fn new(joints: Vec<Vec3>, bones: Vec<[usize; 2]>, root: usize, names: Option<Vec<String>>) -> Result<Self> {
        let n = joints.len();
        if root >= n {
            return Err(SkeletonError::Invalid(format!("root {root} out of range for {n} joints")));
        }
        if let Some((i, _)) = joints.iter().enumerate().find(|(_, p)| !p.iter().all(|c| c.is_finite())) {
            return Err(SkeletonError::Invalid(format!("joint {i} has a non-finite coordinate")));
        }
        let mut seen = HashSet::with_capacity(bones.len());
        for (k, &[a, b]) in bones.iter().enumerate() {
            if a >= n || b >= n {
                return Err(SkeletonError::Invalid(format!("bone {k} references a missing joint")));
            }
            if a == b {
                return Err(SkeletonError::Invalid(format!("bone {k} connects joint {a} to itself")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(SkeletonError::Invalid(format!("bone {k} duplicates ({a}, {b})")));
            }
        }
        if let Some(names) = &names {
            if names.len() != n {
                return Err(SkeletonError::Invalid(format!("{} names for {n} joints", names.len())));
            }
        }
        Ok(Self { joints, bones, root, names })
    }

    pub fn joints(&self) -> &[Vec3] {
        &self.joints
    }

    pub fn bones(&self) -> &[[usize; 2]] {
        &self.bones
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Neighbors of every joint paired with the connecting bone index,
    /// sorted by neighbor index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.joints.len()];
        for (k, &[a, b]) in self.bones.iter().enumerate() {
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.joints.len()];
        for &[a, b] in &self.bones {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::of(&self.joints).expect("skeleton has at least one joint")
    }

    pub fn bone_length(&self, bone: usize) -> f64 {
        let [a, b] = self.bones[bone];
        (self.joints[a] - self.joints[b]).norm()
    }

    /// Same topology with every joint mapped through `f`.
    pub fn map_joints(&self, f: impl FnMut(&Vec3) -> Vec3) -> Skeleton {
        Skeleton { joints: self.joints.iter().map(f).collect(), ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SkeletonJson::from(self)).expect("skeleton serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: SkeletonJson = serde_json::from_str(text)?;
        wire.try_into()
    }
}

/// Wire form: `{"joints":[[x,y,z],..],"bones":[[i,j],..],"root":r,"names":[..]|null}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkeletonJson {
    pub joints: Vec<[f64; 3]>,
    pub bones: Vec<[usize; 2]>,
    pub root: usize,
    pub names: Option<Vec<String>>,
}

impl From<&Skeleton> for SkeletonJson {
    fn from(s: &Skeleton) -> Self {
        SkeletonJson {
            joints: s.joints.iter().map(|p| [p.x, p.y, p.z]).collect(),
            bones: s.bones.clone(),
            root: s.root,
            names: s.names.clone(),
        }
    }
}

impl TryFrom<SkeletonJson> for Skeleton {
    type Error = SkeletonError;

    fn try_from(w: SkeletonJson) -> Result<Self> {
        Skeleton::new(w.joints.into_iter().map(|[x, y, z]| Vec3::new(x, y, z)).collect(), w.bones, w.root, w.names)
    }
}

impl Serialize for Skeleton {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SkeletonJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Skeleton {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        SkeletonJson::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLabel {
    Body,
    Leg,
    Wing,
    Tail,
    Head,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 5] =
        [RegionLabel::Body, RegionLabel::Leg, RegionLabel::Wing, RegionLabel::Tail, RegionLabel::Head];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::Body => "body",
            RegionLabel::Leg => "leg",
            RegionLabel::Wing => "wing",
            RegionLabel::Tail => "tail",
            RegionLabel::Head => "head",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "body" => Ok(RegionLabel::Body),
            "leg" => Ok(RegionLabel::Leg),
            "wing" => Ok(RegionLabel::Wing),
            "tail" => Ok(RegionLabel::Tail),
            "head" => Ok(RegionLabel::Head),
            other => Err(format!("unknown region label {other:?}")),
        }
    }
}

/// Label plus instance id, e.g. `leg/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionKey {
    pub label: RegionLabel,
    pub instance: u32,
}

impl RegionKey {
    pub fn new(label: RegionLabel, instance: u32) -> Self {
        Self { label, instance }
    }
}

impl fmt::Display for RegionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.label, self.instance)
    }
}

/// One labeled sub-skeleton.
///
/// `joints` excludes the anchor: the body joint a limb hangs from belongs to
/// the body, so joint sets of different regions never overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub label: RegionLabel,
    pub instance: u32,
    pub joints: BTreeSet<usize>,
    pub bones: BTreeSet<usize>,
    pub anchor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticPartition {
    pub regions: Vec<Region>,
    pub begin_node: usize,
    pub trunk_junction: Option<usize>,
}

impl Region {
    pub fn key(&self) -> RegionKey {
        RegionKey::new(self.label, self.instance)
    }
}

impl SemanticPartition {
    pub fn keys(&self) -> Vec<RegionKey> {
        self.regions.iter().map(Region::key).collect()
    }

    pub fn region(&self, label: RegionLabel, instance: u32) -> Option<&Region> {
        self.regions.iter().find(|r| r.label == label && r.instance == instance)
    }

    pub fn body(&self) -> Option<&Region> {
        self.regions.iter().find(|r| r.label == RegionLabel::Body)
    }

    pub fn count(&self, label: RegionLabel) -> usize {
        self.regions.iter().filter(|r| r.label == label).count()
    }

    /// Checks the partition invariants against the skeleton it labels.
    pub fn check(&self, skeleton: &Skeleton) -> std::result::Result<(), String> {
        let mut owner = vec![None; skeleton.bones().len()];
        for (ri, r) in self.regions.iter().enumerate() {
            for &b in &r.bones {
                if b >= owner.len() {
                    return Err(format!("region {ri} references missing bone {b}"));
                }
                if let Some(prev) = owner[b].replace(ri) {
                    return Err(format!("bone {b} in regions {prev} and {ri}"));
                }
            }
            if !bones_connected(skeleton, &r.bones) {
                return Err(format!("region {ri} ({}) is not connected", r.label));
            }
        }
        for label in [RegionLabel::Body, RegionLabel::Tail, RegionLabel::Head] {
            if self.count(label) > 1 {
                return Err(format!("more than one {label} region"));
            }
        }
        for label in [RegionLabel::Leg, RegionLabel::Wing] {
            let ids: BTreeSet<u32> = self.regions.iter().filter(|r| r.label == label).map(|r| r.instance).collect();
            if ids.len() != self.count(label) {
                return Err(format!("duplicate {label} instance ids"));
            }
        }
        Ok(())
    }
}

fn bones_connected(skeleton: &Skeleton, bones: &BTreeSet<usize>) -> bool {
    let Some(&first) = bones.iter().next() else { return true };
    let mut reached: HashSet<usize> = skeleton.bones()[first].iter().copied().collect();
    let mut done: HashSet<usize> = HashSet::from([first]);
    loop {
        let before = done.len();
        for &b in bones {
            if done.contains(&b) {
                continue;
            }
            let [x, y] = skeleton.bones()[b];
            if reached.contains(&x) || reached.contains(&y) {
                reached.insert(x);
                reached.insert(y);
                done.insert(b);
            }
        }
        if done.len() == bones.len() {
            return true;
        }
        if done.len() == before {
            return false;
        }
    }
}
