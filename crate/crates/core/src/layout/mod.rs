//! Part placement: edit operators, assembly plans and plan execution.
//!
//! A plan lists the parts to keep (a region of some source asset, possibly
//! copied), the rotate/translate/scale edits applied to them and the joints
//! that get connected by new bones. [`execute_plan`] turns it into one
//! merged skeleton and records where every joint came from.

mod execute;
mod ops;
mod plan;
mod refs;

pub use execute::{
    copy_placements, execute_plan, instantiate_copies, validate_plan, AssembledSkeleton, JointProvenance, PartTransform,
};
pub use ops::{apply_op, EditOp};
pub use plan::{parse_multiplicity, plan_assembly, select_parts, PartAttributes, PlannerRequest};
pub use refs::{JointRef, RegionRef};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::skeleton::{
    classify_regions, clean_skeleton, estimate_orientation, CleanSkeleton, OrientationFrame, RegionKey, RegionLabel,
    SemanticPartition, Skeleton, SkeletonError,
};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("invalid edit: {0}")]
    InvalidOp(String),
    #[error("invalid reference {0:?}")]
    InvalidRef(String),
    #[error("plan rejected: {}", .0.join("; "))]
    PlanRejected(Vec<String>),
    #[error("merged skeleton is disconnected")]
    DisconnectedResult,
    #[error("no asset named {0:?}")]
    UnknownAsset(String),
    #[error("no region {0}")]
    UnknownRegion(String),
    #[error("base asset has no body region")]
    NoBase,
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error("plan json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LayoutError> = std::result::Result<T, E>;

/// A cleaned and classified source skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedAsset {
    pub id: String,
    pub clean: CleanSkeleton,
    pub partition: SemanticPartition,
    pub frame: OrientationFrame,
}

impl ClassifiedAsset {
    pub fn classify(id: impl Into<String>, raw: &Skeleton, prune_fraction: f64) -> Result<Self> {
        let clean = clean_skeleton(raw, prune_fraction)?;
        let frame = estimate_orientation(&clean)?;
        let (partition, frame) = classify_regions(&clean, &frame)?;
        Ok(Self { id: id.into(), clean, partition, frame })
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.clean.skeleton
    }

    pub fn part(&self, key: RegionKey) -> Result<Part> {
        let region = self
            .partition
            .region(key.label, key.instance)
            .ok_or_else(|| LayoutError::UnknownRegion(format!("{}/{key}", self.id)))?;
        let sk = self.skeleton();
        let source_joints: Vec<usize> = region.joints.iter().copied().collect();
        let local = |j: usize| source_joints.binary_search(&j).ok();
        let mut bones = Vec::new();
        let mut attach = None;
        for &b in &region.bones {
            let [u, v] = sk.bones()[b];
            let inner = match (local(u), local(v)) {
                (Some(a), Some(c)) => {
                    bones.push([a, c]);
                    continue;
                }
                (Some(a), None) if Some(v) == region.anchor => a,
                (None, Some(c)) if Some(u) == region.anchor => c,
                _ => continue,
            };
            attach = Some(attach.map_or(inner, |x: usize| x.min(inner)));
        }
        Ok(Part {
            asset: self.id.clone(),
            key,
            joints: source_joints.iter().map(|&j| sk.joints()[j]).collect(),
            source_joints,
            bones,
            anchor: region.anchor.map(|a| sk.joints()[a]),
            attach,
        })
    }

    /// Total bone length along the body region.
    pub fn body_length(&self) -> f64 {
        let sk = self.skeleton();
        self.partition.body().map_or(0.0, |r| r.bones.iter().map(|&b| sk.bone_length(b)).sum())
    }

    /// Length of the bone joining a region to its anchor.
    pub fn root_bone_length(&self, key: RegionKey) -> Option<f64> {
        let part = self.part(key).ok()?;
        Some((part.joints[part.attach?] - part.anchor?).norm())
    }
}

/// Joints and internal bones of one region, in source coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub asset: String,
    pub key: RegionKey,
    /// Source skeleton index of each local joint, ascending.
    pub source_joints: Vec<usize>,
    pub joints: Vec<Vec3>,
    pub bones: Vec<[usize; 2]>,
    /// Position of the body joint the region hangs from.
    pub anchor: Option<Vec3>,
    /// Local joint adjacent to the anchor.
    pub attach: Option<usize>,
}

impl Part {
    pub fn bounds(&self) -> Aabb {
        Aabb::of(&self.joints).expect("regions are never empty")
    }

    pub fn region_ref(&self) -> RegionRef {
        RegionRef { asset: self.asset.clone(), key: self.key }
    }
}

/// A region kept by a plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPart {
    pub asset: String,
    pub region: RegionLabel,
    pub instance: u32,
    pub copies: u32,
    pub symmetric: bool,
}

impl PlanPart {
    pub fn region_ref(&self) -> RegionRef {
        RegionRef { asset: self.asset.clone(), key: RegionKey::new(self.region, self.instance) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub from: JointRef,
    pub to: JointRef,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssemblyPlan {
    pub parts: Vec<PlanPart>,
    pub ops: Vec<EditOp>,
    #[serde(rename = "attach")]
    pub attachments: Vec<Attachment>,
}

impl AssemblyPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plans always serialize")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn part_index(&self, r: &RegionRef) -> Option<usize> {
        self.parts.iter().position(|p| p.asset == r.asset && p.region == r.key.label && p.instance == r.key.instance)
    }

    /// Resolves a joint reference to `(part index, local joint)`.
    pub fn resolve(&self, j: &JointRef) -> std::result::Result<(usize, usize), String> {
        match j {
            JointRef::Full { part, joint } => {
                self.part_index(part).map(|p| (p, *joint)).ok_or_else(|| format!("{j} names an undeclared part"))
            }
            JointRef::Short { label, joint } => {
                let hits: Vec<usize> = (0..self.parts.len()).filter(|&i| self.parts[i].region == *label).collect();
                match hits.as_slice() {
                    [p] => Ok((*p, *joint)),
                    [] => Err(format!("{j} names an undeclared part")),
                    _ => Err(format!("{j} is ambiguous between {} parts", hits.len())),
                }
            }
        }
    }
}

pub(crate) fn find_asset<'a>(assets: &'a [ClassifiedAsset], id: &str) -> Result<&'a ClassifiedAsset> {
    assets.iter().find(|a| a.id == id).ok_or_else(|| LayoutError::UnknownAsset(id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_json_matches_wire_shape() {
        let text = r#"{"parts":[{"asset":"a1","region":"head","instance":1,"copies":2,"symmetric":true}],"ops":[{"type":"rotate","target":"a1/head/1","axis":[0.0,1.0,0.0],"pivot":[0.0,0.0,0.0],"angle_deg":90.0},{"type":"translate","target":"a1/head/1","dir":[1.0,0.0,0.0],"dist":0.2},{"type":"scale","target":"a1/head/1","factor":1.5,"pivot":[0.0,0.0,0.0]}],"attach":[{"from":"body/joint/12","to":"a1/head/1/joint/0"}]}"#;
        let plan = AssemblyPlan::from_json(text).unwrap();
        assert_eq!(plan.parts[0].copies, 2);
        assert_eq!(plan.ops.len(), 3);
        assert_eq!(plan.to_json(), text);
        assert_eq!(AssemblyPlan::from_json(&plan.to_json_pretty()).unwrap(), plan);
    }

    #[test]
    fn unknown_op_type_is_rejected() {
        let text = r#"{"parts":[],"ops":[{"type":"shear","target":"a/body/0"}],"attach":[]}"#;
        assert!(AssemblyPlan::from_json(text).is_err());
    }
}
