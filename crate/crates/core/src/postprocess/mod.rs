//! Crack-surface extraction, failure-load detection, initiation angles and
//! Hausdorff-family distances.

mod angles;
mod distance;
mod surface;
mod transform;

pub use angles::{initiation_angles, plane_angles, plane_normal, AngleProfile, AngleSample, AngleWindow, NotchFrame};
pub use distance::{
    directed_hausdorff, directed_modified_hausdorff, hausdorff, modified_hausdorff, nearest_distances,
    nearest_distances_brute_force, surface_to_cloud_distances, PointIndex, PointSet, SurfaceDistances,
};
pub use surface::{contour_cells, extract_isosurface, triangle_area, CrackSurface, CRACK_LEVEL, MIN_TRIANGLE_AREA};
pub use transform::{PartFilter, RigidTransform};

use crate::error::{Error, Result};

/// First local maximum F(i−1) < F(i) ≥ F(i+1) of a force sequence.
pub fn failure_load(forces: &[f64]) -> Result<(f64, usize)> {
    if forces.len() < 3 {
        return Err(Error::InsufficientData(format!("{} load samples, need at least 3", forces.len())));
    }
    (1..forces.len() - 1)
        .find(|&i| forces[i - 1] < forces[i] && forces[i] >= forces[i + 1])
        .map(|i| (forces[i], i))
        .ok_or(Error::NoFailure)
}
