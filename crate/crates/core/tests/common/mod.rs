#![allow(dead_code)]

use chimera_core::skeleton::Skeleton;
use chimera_core::Vec3;
use proptest::prelude::*;

/// Random tree: joint `i > 0` hangs from a random earlier joint.
pub fn tree(max_joints: usize) -> impl Strategy<Value = Skeleton> {
    (2..=max_joints)
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
            let coords = prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, -0.5f64..0.5), n);
            (parents, coords, 0..n)
        })
        .prop_map(|(parents, coords, root)| {
            let joints = coords.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
            let bones = parents.into_iter().enumerate().map(|(i, p)| [p, i + 1]).collect();
            Skeleton::new(joints, bones, root, None).unwrap()
        })
}

/// Random tree whose joints use a handful of degree-heavy hubs, so that
/// degree ties and degree ≥ 4 junctions are common.
pub fn bushy_tree(max_joints: usize) -> impl Strategy<Value = Skeleton> {
    (5..=max_joints)
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..n).map(|i| 0..i.min(4)).collect();
            // Coarse coordinates make equal projections likely.
            let coords = prop::collection::vec((-2i32..=2, -2i32..=2, -2i32..=2), n);
            (parents, coords, 0..n)
        })
        .prop_map(|(parents, coords, root)| {
            let joints = coords.into_iter().map(|(x, y, z)| Vec3::new(x as f64, y as f64, z as f64) * 0.2).collect();
            let bones = parents.into_iter().enumerate().map(|(i, p)| [p, i + 1]).collect();
            Skeleton::new(joints, bones, root, None).unwrap()
        })
}

pub fn unit_vector() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z))
        .prop_filter("non-degenerate", |v| v.norm() > 1e-3)
        .prop_map(|v| v.normalize())
}

pub fn point(extent: f64) -> impl Strategy<Value = Vec3> {
    (-extent..extent, -extent..extent, -extent..extent).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}
