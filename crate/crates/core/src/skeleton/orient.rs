use serde::{Deserialize, Serialize};

use super::{CleanSkeleton, Result, SkeletonError};
use crate::geometry::{vec3_array, Vec3};

/// Right-handed creature frame: `forward` is horizontal, `up` is `+y`,
/// `lateral = up × forward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationFrame {
    #[serde(with = "vec3_array")]
    pub forward: Vec3,
    #[serde(with = "vec3_array")]
    pub up: Vec3,
    #[serde(with = "vec3_array")]
    pub lateral: Vec3,
}

impl OrientationFrame {
    /// Builds a frame from a horizontal direction; the `y` component of
    /// `forward` is ignored.
    pub fn from_forward(forward: Vec3) -> Result<Self> {
        let h = Vec3::new(forward.x, 0.0, forward.z);
        let n = h.norm();
        if !n.is_finite() || n <= 1e-12 {
            return Err(SkeletonError::DegenerateGeometry("forward has no horizontal part".into()));
        }
        let forward = h / n;
        let up = Vec3::y();
        Ok(Self { forward, up, lateral: up.cross(&forward) })
    }

    pub fn flipped(&self) -> Self {
        Self { forward: -self.forward, up: self.up, lateral: -self.lateral }
    }

    /// True when `forward` points toward `+x` (or `+z` when perpendicular to x).
    pub fn leans_positive(&self) -> bool {
        self.forward.x > 0.0 || (self.forward.x == 0.0 && self.forward.z > 0.0)
    }
}

/// Principal horizontal axis of the joint cloud. The sign is provisional
/// (`+x`-leaning); [`super::classify_regions`] settles it.
pub fn estimate_orientation(s: &CleanSkeleton) -> Result<OrientationFrame> {
    let joints = s.skeleton.joints();
    let n = joints.len() as f64;
    let (mx, mz) = joints.iter().fold((0.0, 0.0), |(x, z), p| (x + p.x, z + p.z));
    let (mx, mz) = (mx / n, mz / n);
    let (mut cxx, mut cxz, mut czz) = (0.0, 0.0, 0.0);
    for p in joints {
        let (dx, dz) = (p.x - mx, p.z - mz);
        cxx += dx * dx;
        cxz += dx * dz;
        czz += dz * dz;
    }
    cxx /= n;
    cxz /= n;
    czz /= n;
    let half_gap = ((cxx - czz) * 0.5).hypot(cxz);
    let lambda = (cxx + czz) * 0.5 + half_gap;
    if lambda.sqrt() < 1e-9 {
        return Err(SkeletonError::DegenerateGeometry("no horizontal spread".into()));
    }
    let (ex, ez) = if half_gap <= f64::EPSILON * lambda {
        (1.0, 0.0)
    } else if cxx >= czz {
        (lambda - czz, cxz)
    } else {
        (cxz, lambda - cxx)
    };
    let frame = OrientationFrame::from_forward(Vec3::new(ex, 0.0, ez))?;
    Ok(if frame.leans_positive() { frame } else { frame.flipped() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Skeleton;

    fn clean(joints: Vec<Vec3>, bones: Vec<[usize; 2]>) -> CleanSkeleton {
        CleanSkeleton::identity(Skeleton::new(joints, bones, 0, None).unwrap())
    }

    #[test]
    fn chain_along_x() {
        let s = clean(
            (0..5).map(|i| Vec3::new(i as f64 * 0.1, 0.02 * (i % 2) as f64, 0.0)).collect(),
            (0..4).map(|i| [i, i + 1]).collect(),
        );
        let f = estimate_orientation(&s).unwrap();
        assert!((f.forward - Vec3::x()).norm() < 1e-12);
        assert!((f.lateral - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn frame_is_orthonormal() {
        let f = OrientationFrame::from_forward(Vec3::new(0.3, 0.9, -0.7)).unwrap();
        for v in [f.forward, f.up, f.lateral] {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
        assert!(f.forward.dot(&f.up).abs() < 1e-9);
        assert!(f.forward.dot(&f.lateral).abs() < 1e-9);
        assert!(f.up.dot(&f.lateral).abs() < 1e-9);
    }

    #[test]
    fn vertical_only_spread_is_degenerate() {
        let s = clean(vec![Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.1, 0.4, 0.2)], vec![[0, 1]]);
        assert!(matches!(estimate_orientation(&s), Err(SkeletonError::DegenerateGeometry(_))));
    }
}
