//! Rigid registration and half-space clipping of point data.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::distance::PointSet;
use super::surface::CrackSurface;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// x ↦ R x + t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub translation: Point,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] }
    }

    /// Rotation by `angle_deg` (right-handed) about the line through `pivot`
    /// along `axis`.
    pub fn about_axis(axis: Point, angle_deg: f64, pivot: Point) -> Result<Self> {
        let v = Vector3::from(axis);
        if !(v.norm() > 0.0) {
            return Err(Error::InvalidArgument("rotation axis must be non-zero".into()));
        }
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(v), angle_deg.to_radians());
        let p = Vector3::from(pivot);
        let t = p - r * p;
        let m = r.matrix();
        Ok(Self { rotation: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])), translation: t.into() })
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    /// Checks that the rotation is orthonormal with determinant +1.
    pub fn validate(&self) -> Result<()> {
        let r = self.matrix();
        let defect = (r.transpose() * r - Matrix3::identity()).norm();
        if defect > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 || self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("transform is not a proper rigid motion".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Point) -> Point {
        let r = &self.rotation;
        std::array::from_fn(|i| r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2] + self.translation[i])
    }

    fn rotate(&self, x: &Point) -> Point {
        let r = &self.rotation;
        std::array::from_fn(|i| r[i][0] * x[0] + r[i][1] * x[1] + r[i][2] * x[2])
    }

    pub fn apply_points(&self, set: &PointSet) -> PointSet {
        PointSet {
            points: set.points.iter().map(|p| self.apply(p)).collect(),
            normals: set.normals.as_ref().map(|n| n.iter().map(|v| self.rotate(v)).collect()),
            colors: set.colors.clone(),
        }
    }

    pub fn apply_surface(&self, surface: &CrackSurface) -> CrackSurface {
        CrackSurface {
            triangles: surface.triangles.iter().map(|t| t.map(|p| self.apply(&p))).collect(),
            ..surface.clone()
        }
    }
}

/// Closed half-space `{x : normal·x <= offset}` used to select the part of
/// a fractured specimen that is compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartFilter {
    pub normal: Point,
    pub offset: f64,
}

impl PartFilter {
    pub fn contains(&self, x: &Point) -> bool {
        self.normal[0] * x[0] + self.normal[1] * x[1] + self.normal[2] * x[2] <= self.offset
    }

    pub fn apply_points(&self, set: &PointSet) -> PointSet {
        let mut out = set.clone();
        out.retain(|p| self.contains(p));
        out
    }

    /// Keeps triangles with all corners inside.
    pub fn apply_surface(&self, surface: &CrackSurface) -> CrackSurface {
        CrackSurface {
            triangles: surface.triangles.iter().filter(|t| t.iter().all(|p| self.contains(p))).copied().collect(),
            ..surface.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quarter_turn_about_offset_axis() {
        let t = RigidTransform::about_axis([0.0, 0.0, 1.0], 90.0, [1.0, 0.0, 0.0]).unwrap();
        t.validate().unwrap();
        let p = t.apply(&[2.0, 0.0, 3.0]);
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p[2], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn reflection_is_rejected() {
        let mut t = RigidTransform::identity();
        t.rotation[2][2] = -1.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn filter_keeps_closed_half_space() {
        let f = PartFilter { normal: [0.0, 0.0, 1.0], offset: 5.0 };
        let s = PointSet::new(vec![[0.0, 0.0, 4.0], [0.0, 0.0, 5.0], [0.0, 0.0, 6.0]]);
        assert_eq!(f.apply_points(&s).len(), 2);
    }
}
