//! Implicit geometry: the embedding box and the inclined V-notch specimen.
//!
//! Coordinates are in mm. `x` runs along the specimen length, `y` along its
//! height (notch at `y = 0`, loads applied at `y = height`) and `z` through
//! the thickness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn volume(&self, dim: usize) -> f64 {
        (0..dim).map(|a| self.extent(a)).product()
    }

    pub fn contains(&self, x: &Point, dim: usize) -> bool {
        (0..dim).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    /// Closed-box overlap test in the first `dim` coordinates.
    pub fn intersects(&self, other: &Aabb, dim: usize) -> bool {
        (0..dim).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    /// Child box `child` of the `2^dim` octasection (axis 0 fastest bit).
    pub fn child(&self, child: usize, dim: usize) -> Aabb {
        let mut out = *self;
        let c = self.center();
        for a in 0..dim {
            if child >> a & 1 == 0 {
                out.max[a] = c[a];
            } else {
                out.min[a] = c[a];
            }
        }
        out
    }

    /// Corner `k` (bit `a` selects min/max along axis `a`).
    pub fn corner(&self, k: usize) -> Point {
        let mut p = self.min;
        for (a, pa) in p.iter_mut().enumerate() {
            if k >> a & 1 == 1 {
                *pa = self.max[a];
            }
        }
        p
    }

    /// Reference coordinates in `[-1, 1]^dim` of a physical point.
    pub fn to_reference(&self, x: &Point, dim: usize) -> Point {
        let mut xi = [0.0; 3];
        for a in 0..dim {
            xi[a] = (2.0 * (x[a] - self.min[a]) / self.extent(a) - 1.0).clamp(-1.0, 1.0);
        }
        xi
    }

    pub fn from_reference(&self, xi: &Point, dim: usize) -> Point {
        let mut x = [0.0; 3];
        for a in 0..dim {
            x[a] = self.min[a] + 0.5 * (xi[a] + 1.0) * self.extent(a);
        }
        x
    }
}

/// Inside/outside query against the physical domain embedded in a box.
pub trait Domain: Send + Sync {
    /// True iff `x` lies in the physical domain.
    fn is_physical(&self, x: &Point) -> bool;
}

/// Domain that fills the entire embedding box.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullDomain;

impl Domain for FullDomain {
    fn is_physical(&self, _x: &Point) -> bool {
        true
    }
}

/// Physical half-space `{x : n·x < offset}`.
#[derive(Debug, Clone, Copy)]
pub struct HalfSpace {
    pub normal: Point,
    pub offset: f64,
}

impl Domain for HalfSpace {
    fn is_physical(&self, x: &Point) -> bool {
        dot(&self.normal, x) < self.offset
    }
}

/// Box with an axis-aligned rectangular slot removed (slot points fictitious).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlotDomain {
    pub slot: Aabb,
    pub dim: usize,
}

impl Domain for SlotDomain {
    fn is_physical(&self, x: &Point) -> bool {
        !self.slot.contains(x, self.dim)
    }
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rectangular bar with an inclined V-notch cut from the bottom face.
///
/// The notch wedge is the intersection of two flank half-spaces and a top
/// plane. Its apex line sits at height `notch_height` and runs along
/// `(sin γ, 0, cos γ)` through the point `(length/2, ·, thickness/2)`; the
/// inclination γ is a rotation about the vertical axis through the notch
/// mid-plane. Points on the flanks count as fictitious.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenGeometry {
    pub length: f64,
    pub height: f64,
    pub thickness: f64,
    pub notch_height: f64,
    pub opening_angle_deg: f64,
    pub inclination_deg: f64,
    /// In-plane unit normal of the bisector plane, `(cos γ, 0, -sin γ)`.
    bisector_normal: Point,
    /// Apex line direction, `(sin γ, 0, cos γ)`.
    apex_direction: Point,
    half_opening_tan: f64,
}

pub const SPECIMEN_LENGTH: f64 = 80.0;
pub const SPECIMEN_HEIGHT: f64 = 20.0;
pub const SPECIMEN_THICKNESS: f64 = 10.0;
pub const NOTCH_HEIGHT: f64 = 6.0;
pub const NOTCH_OPENING_DEG: f64 = 45.0;

/// Benchmark specimen (80 × 20 × 10 mm, 6 mm notch, 45° opening) with the
/// given notch inclination in degrees.
pub fn build_vnotch(inclination_deg: f64) -> Result<SpecimenGeometry> {
    SpecimenGeometry::new(
        [SPECIMEN_LENGTH, SPECIMEN_HEIGHT, SPECIMEN_THICKNESS],
        NOTCH_HEIGHT,
        NOTCH_OPENING_DEG,
        inclination_deg,
    )
}

impl SpecimenGeometry {
    pub fn new(
        size: [f64; 3],
        notch_height: f64,
        opening_angle_deg: f64,
        inclination_deg: f64,
    ) -> Result<Self> {
        if !inclination_deg.is_finite() || inclination_deg.abs() >= 60.0 {
            return Err(Error::InclinationOutOfRange(inclination_deg));
        }
        if size.iter().any(|&s| !(s > 0.0)) || !(notch_height > 0.0 && notch_height < size[1]) {
            return Err(Error::InvalidArgument("non-positive specimen dimensions".into()));
        }
        if !(opening_angle_deg > 0.0 && opening_angle_deg < 180.0) {
            return Err(Error::InvalidArgument(format!(
                "notch opening angle {opening_angle_deg}° not in (0°, 180°)"
            )));
        }
        let g = inclination_deg.to_radians();
        Ok(Self {
            length: size[0],
            height: size[1],
            thickness: size[2],
            notch_height,
            opening_angle_deg,
            inclination_deg,
            bisector_normal: [g.cos(), 0.0, -g.sin()],
            apex_direction: [g.sin(), 0.0, g.cos()],
            half_opening_tan: (0.5 * opening_angle_deg).to_radians().tan(),
        })
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::new([0.0; 3], [self.length, self.height, self.thickness])
    }

    /// Point on the apex line at mid-thickness.
    pub fn notch_center(&self) -> Point {
        [0.5 * self.length, self.notch_height, 0.5 * self.thickness]
    }

    pub fn apex_direction(&self) -> Point {
        self.apex_direction
    }

    pub fn bisector_normal(&self) -> Point {
        self.bisector_normal
    }

    /// Length of the apex line inside the box, `thickness / cos γ`.
    pub fn apex_length(&self) -> f64 {
        self.thickness / self.inclination_deg.to_radians().cos()
    }

    /// Signed distance-like coordinate normal to the bisector plane.
    pub fn bisector_offset(&self, x: &Point) -> f64 {
        let c = self.notch_center();
        let d = [x[0] - c[0], 0.0, x[2] - c[2]];
        dot(&d, &self.bisector_normal)
    }

    /// Bounding planes of the wedge as `(normal, offset)` with the wedge
    /// being `{x : normal·x <= offset}` for every plane.
    pub fn wedge_planes(&self) -> [(Point, f64); 3] {
        let c = self.notch_center();
        let n = self.bisector_normal;
        let t = self.half_opening_tan;
        // flank:  ±(x - c)·n + t (y - h) <= 0
        let mk = |sign: f64| {
            let normal = [sign * n[0], t, sign * n[2]];
            let offset = sign * (n[0] * c[0] + n[2] * c[2]) + t * self.notch_height;
            (normal, offset)
        };
        [mk(1.0), mk(-1.0), ([0.0, 1.0, 0.0], self.notch_height)]
    }

    /// True iff `x` lies inside the closed notch wedge.
    pub fn in_notch(&self, x: &Point) -> bool {
        let lateral = self.bisector_offset(x).abs();
        x[1] <= self.notch_height && lateral <= (self.notch_height - x[1]) * self.half_opening_tan
    }

    /// Volume of the wedge inside the box, exact for `γ = 0` (prism).
    pub fn prism_volume(&self) -> f64 {
        let base = self.notch_height * self.notch_height * self.half_opening_tan;
        base * self.thickness
    }
}

impl Domain for SpecimenGeometry {
    fn is_physical(&self, x: &Point) -> bool {
        !self.in_notch(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn apex_lengths() {
        assert_abs_diff_eq!(build_vnotch(0.0).unwrap().apex_length(), 10.0, epsilon = 1e-12);
        assert!((build_vnotch(30.0).unwrap().apex_length() - 11.55).abs() < 5e-3);
        assert!((build_vnotch(45.0).unwrap().apex_length() - 14.14).abs() < 5e-3);
    }

    #[test]
    fn rejects_large_inclination() {
        assert!(matches!(build_vnotch(60.0), Err(Error::InclinationOutOfRange(_))));
        assert!(build_vnotch(f64::NAN).is_err());
        assert!(build_vnotch(59.9).is_ok());
    }

    #[test]
    fn simple_membership() {
        let g = build_vnotch(0.0).unwrap();
        assert!(g.is_physical(&[40.0, 0.0, 5.0 + 4.9]) == false);
        assert!(g.is_physical(&[20.0, 0.0, 5.0]));
        assert!(!g.is_physical(&[40.0, 3.0, 5.0]));
        assert!(g.is_physical(&[40.0, 6.01, 5.0]));
    }

    /// Half-space intersection oracle written directly from the wedge planes.
    fn csg_oracle(g: &SpecimenGeometry, x: &Point) -> bool {
        let inside_wedge = g.wedge_planes().iter().all(|(n, off)| dot(n, x) <= *off + 1e-12);
        !inside_wedge
    }

    #[test]
    fn grid_matches_csg_oracle() {
        for gamma in [0.0, 30.0, 45.0, -30.0] {
            let g = build_vnotch(gamma).unwrap();
            for i in 0..=80 {
                for j in 0..=20 {
                    for k in 0..=10 {
                        // offset slightly so no sample sits exactly on a flank
                        let x = [i as f64 + 0.013, j as f64 + 0.007, k as f64 + 0.011];
                        assert_eq!(g.is_physical(&x), csg_oracle(&g, &x), "γ={gamma} at {x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn mirror_symmetry_in_inclination() {
        let gp = build_vnotch(30.0).unwrap();
        let gm = build_vnotch(-30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let x = [rng.gen_range(30.0..50.0), rng.gen_range(0.0..8.0), rng.gen_range(0.0..10.0)];
            let mirrored = [x[0], x[1], 10.0 - x[2]];
            assert_eq!(gp.is_physical(&x), gm.is_physical(&mirrored));
        }
    }

    #[test]
    fn monte_carlo_wedge_volume() {
        let g = build_vnotch(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let region = Aabb::new([35.0, 0.0, 0.0], [45.0, 6.0, 10.0]);
        let n = 400_000;
        let hits = (0..n)
            .filter(|_| {
                let x = [
                    rng.gen_range(region.min[0]..region.max[0]),
                    rng.gen_range(region.min[1]..region.max[1]),
                    rng.gen_range(region.min[2]..region.max[2]),
                ];
                g.in_notch(&x)
            })
            .count();
        let vol = region.volume(3) * hits as f64 / n as f64;
        let exact = g.prism_volume();
        let p = exact / region.volume(3);
        let sigma = region.volume(3) * (p * (1.0 - p) / n as f64).sqrt();
        assert!((vol - exact).abs() < 4.0 * sigma, "{vol} vs {exact}");
    }

    #[test]
    fn notch_fits_in_box() {
        for gamma in [0.0, 30.0, 45.0, 59.0, -45.0] {
            let g = build_vnotch(gamma).unwrap();
            for z in [0.0, 10.0] {
                for y in [0.0, 6.0] {
                    let half = (6.0 - y) * g.half_opening_tan;
                    // extreme lateral points of the wedge at the faces
                    let t = (z - 5.0) / g.apex_direction[2];
                    let base = [40.0 + t * g.apex_direction[0], y, z];
                    for s in [-1.0, 1.0] {
                        let x = base[0] + s * half / g.bisector_normal[0];
                        assert!(x > 0.0 && x < 80.0);
                    }
                }
            }
        }
    }
}
