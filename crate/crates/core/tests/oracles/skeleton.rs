use std::collections::BTreeSet;

use chimera_core::skeleton::Skeleton;
use chimera_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Begin node by exhaustive scan: the root if it branches, else the
/// neighbor with the largest degree, smallest index first.
pub fn brute_begin(s: &Skeleton) -> usize {
    let deg = s.degrees();
    let r = s.root();
    if deg[r] >= 3 {
        return r;
    }
    let nbrs: BTreeSet<usize> = s
        .bones()
        .iter()
        .filter_map(|&[a, b]| {
            if a == r {
                Some(b)
            } else if b == r {
                Some(a)
            } else {
                None
            }
        })
        .collect();
    let top = nbrs.iter().map(|&u| deg[u]).max();
    match top {
        Some(top) => *nbrs.iter().find(|&&u| deg[u] == top).unwrap(),
        None => r,
    }
}

/// Trunk junction by exhaustive scan over all joints.
pub fn brute_junction(s: &Skeleton, forward: &Vec3, b: usize) -> Option<usize> {
    let deg = s.degrees();
    let pick = |ok: &dyn Fn(usize) -> bool| {
        let mut cands: Vec<(f64, usize)> =
            (0..s.joint_count()).filter(|&j| ok(j)).map(|j| (s.joints()[j].dot(forward), j)).collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.first().map(|c| c.1)
    };
    pick(&|j| deg[j] >= 4).or_else(|| pick(&|j| deg[j] >= 3 && j != b))
}

/// Seeded random tree of 2 to `max_joints` joints. Half the trees hang
/// every joint from one of four hubs on a coarse lattice, so degree ties,
/// equal projections and degree ≥ 4 junctions are common.
pub fn random_tree(seed: u64, max_joints: usize) -> Skeleton {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bushy = rng.random_bool(0.5);
    let n = rng.random_range(if bushy { 5 } else { 2 }..=max_joints);
    let joints = (0..n)
        .map(|_| {
            if bushy {
                Vec3::new(
                    rng.random_range(-2..=2) as f64,
                    rng.random_range(-2..=2) as f64,
                    rng.random_range(-2..=2) as f64,
                ) * 0.2
            } else {
                Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
            }
        })
        .collect();
    let bones = (1..n).map(|i| [rng.random_range(0..if bushy { i.min(4) } else { i }), i]).collect();
    let root = rng.random_range(0..n);
    Skeleton::new(joints, bones, root, None).unwrap()
}
