//! Crack initiation angles along the notch edge.
//!
//! The notch frame has its origin where the apex line leaves the front face
//! `z = 0`, `e_x` normal to the bisector plane, `e_y` vertical and `e_z`
//! along the apex line. A tangent plane with unit normal `n` (oriented so
//! that `n_x > 0`) is the bisector plane turned by α about `e_y` and then
//! by θ* about `e_z`: `n = (cos α cos θ*, cos α sin θ*, −sin α)`.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::surface::CrackSurface;
use crate::error::{Error, Result};
use crate::geometry::{Point, SpecimenGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleWindow {
    /// Spacing of the samples along the notch and width of each fit slab [mm].
    pub dz: f64,
    /// Only surface points up to this height are used [mm].
    pub max_height: f64,
}

impl Default for AngleWindow {
    fn default() -> Self {
        Self { dz: 0.5, max_height: 6.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSample {
    /// Position along the apex line from the front face [mm].
    pub z: f64,
    pub alpha_deg: f64,
    pub theta_deg: f64,
    /// Height of the initiation curve in this slab [mm].
    pub initiation_height: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AngleProfile {
    pub samples: Vec<AngleSample>,
}

/// Orthonormal notch frame of a specimen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotchFrame {
    pub origin: Point,
    pub axes: [Point; 3],
    pub length: f64,
}

impl NotchFrame {
    pub fn of(geom: &SpecimenGeometry) -> Self {
        let c = geom.notch_center();
        let t = geom.apex_direction();
        let half = 0.5 * geom.apex_length();
        let origin = [c[0] - half * t[0], c[1], c[2] - half * t[2]];
        Self { origin, axes: [geom.bisector_normal(), [0.0, 1.0, 0.0], t], length: geom.apex_length() }
    }

    /// Frame coordinates; the second one is the absolute height.
    pub fn local(&self, x: &Point) -> Point {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1], x[2] - self.origin[2]];
        let dot = |a: &Point| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
        [dot(&self.axes[0]), dot(&self.axes[1]) + self.origin[1], dot(&self.axes[2])]
    }

    pub fn global(&self, x: &Point) -> Point {
        let h = x[1] - self.origin[1];
        std::array::from_fn(|k| self.origin[k] + x[0] * self.axes[0][k] + h * self.axes[1][k] + x[2] * self.axes[2][k])
    }
}

/// (α, θ*) in degrees of a plane with the given frame-local normal.
pub fn plane_angles(normal: &Point) -> (f64, f64) {
    let l = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
    let s = if normal[0] < 0.0 { -1.0 / l } else { 1.0 / l };
    let n = normal.map(|c| c * s);
    ((-n[2]).clamp(-1.0, 1.0).asin().to_degrees(), n[1].atan2(n[0]).to_degrees())
}

/// Frame-local unit normal for the angles (α, θ*) in degrees.
pub fn plane_normal(alpha_deg: f64, theta_deg: f64) -> Point {
    let (a, t) = (alpha_deg.to_radians(), theta_deg.to_radians());
    [a.cos() * t.cos(), a.cos() * t.sin(), -a.sin()]
}

/// Least-squares plane normal; `None` if the points do not span a plane.
fn fit_normal(points: &[Point]) -> Option<Point> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p)) / n;
    let centered = DMatrix::from_fn(points.len(), 3, |i, k| points[i][k] - mean[k]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t?;
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let variance = |k: usize| svd.singular_values[order[k]].powi(2) / n;
    let (small, mid) = (variance(0), variance(1));
    if !(mid > 1e-12) || small > 0.5 * mid {
        return None;
    }
    let v = v_t.row(order[0]);
    Some([v[0], v[1], v[2]])
}

/// Samples α and θ* every `window.dz` along the notch. Each sample fits a
/// plane to the surface vertices of one slab of width `dz`, below
/// `window.max_height`; slabs without a usable plane are skipped.
pub fn initiation_angles(surface: &CrackSurface, geom: &SpecimenGeometry, window: &AngleWindow) -> Result<AngleProfile> {
    if !(window.dz > 0.0) || !window.max_height.is_finite() {
        return Err(Error::InvalidArgument("angle window needs dz > 0 and a finite height".into()));
    }
    let frame = NotchFrame::of(geom);
    let local: Vec<Point> = surface.vertices().iter().map(|p| frame.local(p)).filter(|p| p[1] <= window.max_height).collect();
    if local.is_empty() {
        return Err(Error::InsufficientData(format!("no surface below y = {} mm", window.max_height)));
    }
    let count = (frame.length / window.dz + 1e-9).floor() as usize;
    let mut samples = Vec::new();
    for k in 0..=count {
        let z = k as f64 * window.dz;
        let slab: Vec<Point> = local.iter().filter(|p| (p[2] - z).abs() <= 0.5 * window.dz).copied().collect();
        let Some(n) = fit_normal(&slab) else { continue };
        let (alpha_deg, theta_deg) = plane_angles(&n);
        let initiation_height = slab.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        samples.push(AngleSample { z, alpha_deg, theta_deg, initiation_height });
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData("no slab along the notch contains a plane patch".into()));
    }
    Ok(AngleProfile { samples })
}
