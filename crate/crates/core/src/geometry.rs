//! Small geometric vocabulary shared by every module.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Axis-aligned bounds of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn of<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb { min: first, max: first };
        for p in it {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

/// `p -> linear * p + translation`.
///
/// Plans only ever produce similarities (rotation, uniform scale, optional
/// mirror), but the type does not assume it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine3 {
    #[serde(with = "mat3_rows")]
    pub linear: Matrix3<f64>,
    #[serde(with = "vec3_array")]
    pub translation: Vec3,
}

impl Default for Affine3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Affine3 {
    pub fn identity() -> Self {
        Self { linear: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn translation(t: Vec3) -> Self {
        Self { linear: Matrix3::identity(), translation: t }
    }

    /// Rotation by `angle_rad` about `axis` through `pivot`.
    pub fn rotation_about(axis: &Vec3, pivot: &Vec3, angle_rad: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle_rad).into_inner();
        Self { linear: r, translation: pivot - r * pivot }
    }

    pub fn scale_about(factor: f64, pivot: &Vec3) -> Self {
        Self { linear: Matrix3::identity() * factor, translation: pivot * (1.0 - factor) }
    }

    /// Reflection across the plane through `origin` with unit `normal`.
    pub fn reflection(origin: &Vec3, normal: &Vec3) -> Self {
        let h = Matrix3::identity() - 2.0 * normal * normal.transpose();
        Self { linear: h, translation: origin - h * origin }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.translation
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn after(&self, inner: &Affine3) -> Affine3 {
        Affine3 { linear: self.linear * inner.linear, translation: self.linear * inner.translation + self.translation }
    }

    pub fn inverse(&self) -> Option<Affine3> {
        let inv = self.linear.try_inverse()?;
        Some(Affine3 { linear: inv, translation: -(inv * self.translation) })
    }

    pub fn is_identity_linear(&self, tol: f64) -> bool {
        (self.linear - Matrix3::identity()).amax() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }
}

pub(crate) mod vec3_array {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

mod mat3_rows {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_matches_sequential_application() {
        let a = Affine3::rotation_about(&Vec3::new(0.0, 1.0, 0.0), &Vec3::new(0.1, 0.0, 0.2), 0.7);
        let b = Affine3::scale_about(1.5, &Vec3::new(-0.2, 0.3, 0.0));
        let p = Vec3::new(0.3, -0.1, 0.25);
        let seq = b.apply(&a.apply(&p));
        let composed = b.after(&a).apply(&p);
        assert!((seq - composed).norm() < 1e-15);
        let inv = b.after(&a).inverse().unwrap();
        assert!((inv.apply(&composed) - p).norm() < 1e-15);
    }

    #[test]
    fn reflection_is_involution() {
        let n = Vec3::new(1.0, 0.0, 1.0).normalize();
        let r = Affine3::reflection(&Vec3::new(0.1, 0.2, 0.3), &n);
        let p = Vec3::new(0.4, -0.3, 0.05);
        assert!((r.apply(&r.apply(&p)) - p).norm() < 1e-15);
    }
}
