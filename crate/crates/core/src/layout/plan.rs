//! Request parsing and the built-in rule planner.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    validate_plan, AssemblyPlan, Attachment, ClassifiedAsset, EditOp, JointRef, LayoutError, PlanPart, RegionRef,
    Result,
};
use crate::geometry::{vec3_array, Vec3};
use crate::skeleton::{RegionKey, RegionLabel};

const NUMBER_WORDS: [&str; 11] =
    ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
const NEGATIONS: [&str; 3] = ["no", "without", "minus"];

fn region_word(token: &str) -> Option<RegionLabel> {
    Some(match token {
        "body" | "bodies" | "torso" => RegionLabel::Body,
        "leg" | "legs" => RegionLabel::Leg,
        "wing" | "wings" => RegionLabel::Wing,
        "tail" | "tails" => RegionLabel::Tail,
        "head" | "heads" => RegionLabel::Head,
        _ => return None,
    })
}

fn count_word(token: &str) -> Option<u32> {
    if let Some(n) = NUMBER_WORDS.iter().position(|w| *w == token) {
        return Some(n as u32);
    }
    if !token.is_empty() && token.len() <= 3 && token.bytes().all(|b| b.is_ascii_digit()) {
        return token.parse().ok();
    }
    None
}

fn tokens(request: &str) -> Vec<String> {
    request.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Explicit counts written directly before a region word ("two heads",
/// "4 legs"). Later mentions override earlier ones.
pub fn parse_multiplicity(request: &str) -> BTreeMap<RegionLabel, u32> {
    let t = tokens(request);
    let mut out = BTreeMap::new();
    for w in t.windows(2) {
        if let (Some(n), Some(label)) = (count_word(&w[0]), region_word(&w[1])) {
            out.insert(label, n);
        }
    }
    out
}

/// Regions the request names, and those it negates ("no tail").
fn mentions(request: &str) -> (Vec<RegionLabel>, Vec<RegionLabel>) {
    let t = tokens(request);
    let mut named = Vec::new();
    let mut negated = Vec::new();
    for (i, tok) in t.iter().enumerate() {
        if let Some(label) = region_word(tok) {
            named.push(label);
            if i > 0 && NEGATIONS.contains(&t[i - 1].as_str()) {
                negated.push(label);
            }
        }
    }
    (named, negated)
}

/// Chooses which regions to keep. The first asset is the base and supplies
/// the body. Each limb kind comes from the first other asset that has it
/// when the request names it, and from the base otherwise.
pub fn select_parts(assets: &[ClassifiedAsset], request: &str) -> Result<Vec<PlanPart>> {
    let base = assets.first().ok_or(LayoutError::NoBase)?;
    if base.partition.body().is_none() {
        return Err(LayoutError::NoBase);
    }
    let counts = parse_multiplicity(request);
    let (named, negated) = mentions(request);
    let mut parts =
        vec![PlanPart { asset: base.id.clone(), region: RegionLabel::Body, instance: 0, copies: 1, symmetric: false }];
    for label in [RegionLabel::Leg, RegionLabel::Wing, RegionLabel::Tail, RegionLabel::Head] {
        if negated.contains(&label) {
            continue;
        }
        let donor = assets[1..].iter().find(|a| a.partition.count(label) > 0);
        let source = match donor {
            Some(d) if named.contains(&label) => d,
            _ if base.partition.count(label) > 0 => base,
            _ => continue,
        };
        let mut instances: Vec<u32> =
            source.partition.regions.iter().filter(|r| r.label == label).map(|r| r.instance).collect();
        instances.sort_unstable();
        let count = counts.get(&label).copied();
        match label {
            RegionLabel::Head | RegionLabel::Tail => {
                let copies = count.unwrap_or(1);
                if copies > 0 {
                    parts.push(PlanPart {
                        asset: source.id.clone(),
                        region: label,
                        instance: instances[0],
                        copies,
                        symmetric: copies >= 2,
                    });
                }
            }
            _ => {
                let keep = count.map_or(instances.len(), |n| (n as usize).min(instances.len()));
                parts.extend(instances[..keep].iter().map(|&instance| PlanPart {
                    asset: source.id.clone(),
                    region: label,
                    instance,
                    copies: 1,
                    symmetric: false,
                }));
            }
        }
    }
    Ok(parts)
}

/// Structured description of a candidate part sent to a planning backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartAttributes {
    pub category: RegionLabel,
    #[serde(with = "vec3_array")]
    pub position: Vec3,
    #[serde(with = "vec3_array")]
    pub size: Vec3,
    #[serde(with = "vec3_array")]
    pub orientation: Vec3,
}

/// Payload for a planning backend: every candidate part with its
/// attributes, plus the request text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRequest {
    #[serde(flatten)]
    pub plan: AssemblyPlan,
    pub request: String,
    pub attributes: Vec<PartAttributes>,
}

impl PlannerRequest {
    pub fn new(assets: &[ClassifiedAsset], request: &str) -> Result<Self> {
        let mut plan = AssemblyPlan::default();
        let mut attributes = Vec::new();
        for a in assets {
            for r in &a.partition.regions {
                let part = a.part(r.key())?;
                let b = part.bounds();
                let centroid = part.joints.iter().sum::<Vec3>() / part.joints.len() as f64;
                plan.parts.push(PlanPart {
                    asset: a.id.clone(),
                    region: r.label,
                    instance: r.instance,
                    copies: 1,
                    symmetric: false,
                });
                attributes.push(PartAttributes {
                    category: r.label,
                    position: centroid,
                    size: b.max - b.min,
                    orientation: a.frame.forward,
                });
            }
        }
        Ok(Self { plan, request: request.to_string(), attributes })
    }
}

/// Builds a plan without any backend.
///
/// Each borrowed part is scaled about its anchor so its root bone matches
/// the base's bone at the same socket, turned about `+y` onto the base's
/// forward direction and moved so its anchor lands on the socket. Sockets:
/// head at the trunk junction, tail at the begin node, legs and wings at the
/// base's own limb anchors (wings fall back to the trunk junction). Parts
/// taken from the base itself are left in place.
pub fn plan_assembly(assets: &[ClassifiedAsset], request: &str) -> Result<AssemblyPlan> {
    let parts = select_parts(assets, request)?;
    let base = &assets[0];
    let body_ref = RegionRef { asset: base.id.clone(), key: RegionKey::new(RegionLabel::Body, 0) };
    let body = base.part(body_ref.key)?;
    let mut plan = AssemblyPlan { parts: parts.clone(), ops: Vec::new(), attachments: Vec::new() };
    let sk = base.skeleton();
    let b = base.partition.begin_node;
    let d = base.partition.trunk_junction.unwrap_or(b);

    for pp in parts.iter().filter(|p| p.region != RegionLabel::Body) {
        let asset = super::find_asset(assets, &pp.asset)?;
        let key = pp.region_ref().key;
        let part = asset.part(key)?;
        let region = asset.partition.region(key.label, key.instance).expect("selected from partition");
        let (Some(anchor), Some(attach)) = (part.anchor, part.attach) else { continue };
        let socket = if asset.id == base.id {
            region.anchor.expect("limbs have anchors")
        } else {
            match key.label {
                RegionLabel::Head => d,
                RegionLabel::Tail => b,
                label => nearest_socket(base, asset, label, &anchor).unwrap_or(if label == RegionLabel::Wing {
                    d
                } else {
                    b
                }),
            }
        };
        let target = pp.region_ref();
        if asset.id != base.id {
            let socket_pos = sk.joints()[socket];
            let own = (part.joints[attach] - anchor).norm();
            let matching = base
                .partition
                .regions
                .iter()
                .filter(|r| r.label == key.label && r.anchor == Some(socket))
                .min_by_key(|r| r.instance)
                .and_then(|r| base.root_bone_length(r.key()));
            let factor = match matching {
                Some(len) if own > 0.0 && len > 0.0 => len / own,
                _ => {
                    let (lb, la) = (base.body_length(), asset.body_length());
                    if lb > 0.0 && la > 0.0 {
                        lb / la
                    } else {
                        1.0
                    }
                }
            };
            if (factor - 1.0).abs() > 1e-12 {
                plan.ops.push(EditOp::Scale { target: target.clone(), factor, pivot: anchor });
            }
            let (f0, f1) = (asset.frame.forward, base.frame.forward);
            let angle = f0.cross(&f1).dot(&Vec3::y()).atan2(f0.dot(&f1)).to_degrees();
            if angle.abs() > 1e-12 {
                plan.ops.push(EditOp::Rotate {
                    target: target.clone(),
                    axis: Vec3::y(),
                    pivot: anchor,
                    angle_deg: angle,
                });
            }
            let shift = socket_pos - anchor;
            let dist = shift.norm();
            if dist > 1e-12 {
                plan.ops.push(EditOp::Translate { target: target.clone(), dir: shift / dist, dist });
            }
        }
        let socket_local = body.source_joints.binary_search(&socket).map_err(|_| {
            LayoutError::UnknownRegion(format!("socket joint {socket} outside the body of {}", base.id))
        })?;
        plan.attachments.push(Attachment {
            from: JointRef::Full { part: body_ref.clone(), joint: socket_local },
            to: JointRef::Full { part: target, joint: attach },
        });
    }
    let violations = validate_plan(&plan, assets);
    if !violations.is_empty() {
        return Err(LayoutError::PlanRejected(violations));
    }
    Ok(plan)
}

/// Base limb anchor of the same kind whose position along the body best
/// matches the donor anchor's; lower joint index on ties.
fn nearest_socket(base: &ClassifiedAsset, donor: &ClassifiedAsset, label: RegionLabel, anchor: &Vec3) -> Option<usize> {
    let along = |a: &ClassifiedAsset, p: &Vec3| {
        let sk = a.skeleton();
        let b = sk.joints()[a.partition.begin_node];
        let d = a.partition.trunk_junction.map_or(b, |d| sk.joints()[d]);
        let span = (d - b).dot(&a.frame.forward);
        let t = (p - b).dot(&a.frame.forward);
        if span.abs() > 1e-12 {
            t / span
        } else {
            t
        }
    };
    let want = along(donor, anchor);
    let mut sockets: Vec<usize> =
        base.partition.regions.iter().filter(|r| r.label == label).filter_map(|r| r.anchor).collect();
    sockets.sort_unstable();
    sockets.dedup();
    sockets
        .into_iter()
        .map(|s| (s, (along(base, &base.skeleton().joints()[s]) - want).abs()))
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
        .map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplicity_words_and_digits() {
        let m = parse_multiplicity("A dragon with two heads and 6 legs");
        assert_eq!(m.get(&RegionLabel::Head), Some(&2));
        assert_eq!(m.get(&RegionLabel::Leg), Some(&6));
        assert!(parse_multiplicity("a head with horns").is_empty());
        assert!(parse_multiplicity("two big heads").is_empty());
        assert_eq!(parse_multiplicity("THREE tails").get(&RegionLabel::Tail), Some(&3));
    }

    #[test]
    fn negated_mentions() {
        let (named, negated) = mentions("a lion with wings but no tail");
        assert!(named.contains(&RegionLabel::Wing));
        assert_eq!(negated, vec![RegionLabel::Tail]);
    }
}
