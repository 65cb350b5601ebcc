//! Rotate, translate and scale edits.

use serde::{Deserialize, Serialize};

use super::{LayoutError, RegionRef, Result};
use crate::geometry::{vec3_array, Affine3, Vec3};

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum EditOp {
    /// Rotation by `angle_deg` about `axis` through `pivot`.
    Rotate {
        target: RegionRef,
        #[serde(with = "vec3_array")]
        axis: Vec3,
        #[serde(with = "vec3_array")]
        pivot: Vec3,
        angle_deg: f64,
    },
    /// Shift by `dist` along `dir`.
    Translate {
        target: RegionRef,
        #[serde(with = "vec3_array")]
        dir: Vec3,
        dist: f64,
    },
    /// `p -> pivot + factor * (p - pivot)`.
    Scale {
        target: RegionRef,
        factor: f64,
        #[serde(with = "vec3_array")]
        pivot: Vec3,
    },
}

impl EditOp {
    pub fn target(&self) -> &RegionRef {
        match self {
            EditOp::Rotate { target, .. } | EditOp::Translate { target, .. } | EditOp::Scale { target, .. } => target,
        }
    }

    /// Checks unit axes, a positive scale and finite parameters.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        let unit = |v: &Vec3, what: &str| {
            if finite(v) && (v.norm() - 1.0).abs() <= UNIT_TOL {
                Ok(())
            } else {
                Err(format!("{what} of {} is not a unit vector", self.target()))
            }
        };
        match self {
            EditOp::Rotate { axis, pivot, angle_deg, .. } => {
                unit(axis, "rotation axis")?;
                if !finite(pivot) || !angle_deg.is_finite() {
                    return Err(format!("non-finite rotation of {}", self.target()));
                }
            }
            EditOp::Translate { dir, dist, .. } => {
                unit(dir, "translation direction")?;
                if !dist.is_finite() {
                    return Err(format!("non-finite translation of {}", self.target()));
                }
            }
            EditOp::Scale { factor, pivot, .. } => {
                if !factor.is_finite() || *factor <= 0.0 {
                    return Err(format!("non-positive scale {factor} on {}", self.target()));
                }
                if !finite(pivot) {
                    return Err(format!("non-finite scale pivot on {}", self.target()));
                }
            }
        }
        Ok(())
    }

    pub fn to_affine(&self) -> Affine3 {
        match self {
            EditOp::Rotate { axis, pivot, angle_deg, .. } => {
                Affine3::rotation_about(axis, pivot, angle_deg.to_radians())
            }
            EditOp::Translate { dir, dist, .. } => Affine3::translation(dir * *dist),
            EditOp::Scale { factor, pivot, .. } => Affine3::scale_about(*factor, pivot),
        }
    }

    /// The same edit with the opposite effect.
    pub fn inverse(&self) -> EditOp {
        let mut op = self.clone();
        match &mut op {
            EditOp::Rotate { angle_deg, .. } => *angle_deg = -*angle_deg,
            EditOp::Translate { dist, .. } => *dist = -*dist,
            EditOp::Scale { factor, .. } => *factor = 1.0 / *factor,
        }
        op
    }
}

/// Applies one edit to a joint list.
pub fn apply_op(joints: &[Vec3], op: &EditOp) -> Result<Vec<Vec3>> {
    op.validate().map_err(LayoutError::InvalidOp)?;
    let t = op.to_affine();
    Ok(joints.iter().map(|p| t.apply(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> RegionRef {
        "a/head/0".parse().unwrap()
    }

    #[test]
    fn analytic_cases() {
        let p = [Vec3::new(1.0, 0.0, 0.0)];
        let rot = EditOp::Rotate { target: target(), axis: Vec3::y(), pivot: Vec3::zeros(), angle_deg: 90.0 };
        let out = apply_op(&p, &rot).unwrap();
        assert!((out[0] - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);

        let zero =
            EditOp::Rotate { target: target(), axis: Vec3::x(), pivot: Vec3::new(0.3, 0.1, 0.0), angle_deg: 0.0 };
        assert_eq!(apply_op(&p, &zero).unwrap(), p.to_vec());

        let scale = EditOp::Scale { target: target(), factor: 2.0, pivot: Vec3::zeros() };
        let out = apply_op(&[Vec3::new(0.1, 0.2, 0.3)], &scale).unwrap();
        assert!((out[0] - Vec3::new(0.2, 0.4, 0.6)).norm() < 1e-15);

        let tr = EditOp::Translate { target: target(), dir: Vec3::z(), dist: 0.25 };
        assert_eq!(apply_op(&p, &tr).unwrap()[0], Vec3::new(1.0, 0.0, 0.25));
    }

    #[test]
    fn invalid_edits() {
        let bad = [
            EditOp::Scale { target: target(), factor: 0.0, pivot: Vec3::zeros() },
            EditOp::Scale { target: target(), factor: -1.0, pivot: Vec3::zeros() },
            EditOp::Rotate { target: target(), axis: Vec3::new(1.0, 1.0, 0.0), pivot: Vec3::zeros(), angle_deg: 5.0 },
            EditOp::Translate { target: target(), dir: Vec3::x(), dist: f64::NAN },
        ];
        for op in bad {
            assert!(matches!(apply_op(&[Vec3::zeros()], &op), Err(LayoutError::InvalidOp(_))), "{op:?}");
        }
        let msg = EditOp::Scale { target: target(), factor: 0.0, pivot: Vec3::zeros() }.validate().unwrap_err();
        assert!(msg.contains("non-positive scale"));
    }
}
