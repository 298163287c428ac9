//! Boundary strips on faces of the embedding box: penalty Dirichlet
//! conditions, tractions and the reaction force on loaded strips.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::assembly::{self, Tabulation};
use super::Discretization;
use crate::basis::gauss_rule;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point};
use crate::linalg::CsrMatrix;
use crate::mesh::MlhpMesh;

/// Penalty-imposed displacement on a rectangle of a box face. The face is
/// flat along `normal_axis`; prescribed component values are multiplied by
/// the load parameter (a value of 0 fixes the component).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletStrip {
    pub face: Aabb,
    pub normal_axis: usize,
    pub components: [Option<f64>; 3],
}

impl DirichletStrip {
    /// True if the strip moves with the load parameter.
    pub fn is_loaded(&self) -> bool {
        self.components.iter().any(|c| c.is_some_and(|v| v != 0.0))
    }
}

/// Constant traction (force per area) on a rectangle of a box face,
/// multiplied by the load factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractionStrip {
    pub face: Aabb,
    pub normal_axis: usize,
    pub traction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<DirichletStrip>,
    pub tractions: Vec<TractionStrip>,
    /// Points where the phase field is pinned to zero.
    pub phase_pins: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StripRef {
    Dirichlet(usize),
    Traction(usize),
}

/// Quadrature over the intersection of one leaf face with one strip.
#[derive(Debug, Clone)]
pub(crate) struct FacePatch {
    pub pos: usize,
    pub strip: StripRef,
    pub points: Vec<(Point, f64)>,
    /// Smallest edge length of the leaf.
    pub h: f64,
}

fn strip_plane(face: &Aabb, axis: usize) -> f64 {
    0.5 * (face.min[axis] + face.max[axis])
}

pub(crate) fn face_patches(mesh: &MlhpMesh, bcs: &BoundaryConditions) -> Result<Vec<FacePatch>> {
    let dim = mesh.dim();
    let domain = mesh.domain();
    let strips: Vec<(StripRef, &Aabb, usize)> = bcs
        .dirichlet
        .iter()
        .enumerate()
        .map(|(i, s)| (StripRef::Dirichlet(i), &s.face, s.normal_axis))
        .chain(bcs.tractions.iter().enumerate().map(|(i, s)| (StripRef::Traction(i), &s.face, s.normal_axis)))
        .collect();
    for &(_, face, axis) in &strips {
        let plane = strip_plane(face, axis);
        let tol = 1e-9 * domain.extent(axis);
        if axis >= dim || ((plane - domain.min[axis]).abs() > tol && (plane - domain.max[axis]).abs() > tol) {
            return Err(Error::InvalidArgument(format!(
                "boundary strip {face:?} does not lie on a face of the mesh domain"
            )));
        }
    }
    let n = mesh.order() + 1;
    let rule = gauss_rule(n);
    let mut patches = Vec::new();
    for (pos, &leaf) in mesh.leaves().iter().enumerate() {
        let b = mesh.cell(leaf).bounds;
        for &(strip, face, axis) in &strips {
            let plane = strip_plane(face, axis);
            let tol = 1e-9 * b.extent(axis);
            if (plane - b.min[axis]).abs() > tol && (plane - b.max[axis]).abs() > tol {
                continue;
            }
            let tangential: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
            let mut ranges = Vec::new();
            for &a in &tangential {
                let lo = b.min[a].max(face.min[a]);
                let hi = b.max[a].min(face.max[a]);
                if hi - lo <= 1e-12 * b.extent(a) {
                    break;
                }
                ranges.push((a, lo, hi));
            }
            if ranges.len() != tangential.len() {
                continue;
            }
            let mut points = vec![([0.0; 3], 1.0)];
            points[0].0[axis] = plane;
            for &(a, lo, hi) in &ranges {
                let half = 0.5 * (hi - lo);
                let mut next = Vec::with_capacity(points.len() * n);
                for (x, w) in &points {
                    for (xi, wi) in rule.points.iter().zip(&rule.weights) {
                        let mut y: Point = *x;
                        y[a] = lo + half * (xi + 1.0);
                        next.push((y, w * wi * half));
                    }
                }
                points = next;
            }
            let h = (0..dim).map(|a| b.extent(a)).fold(f64::INFINITY, f64::min);
            patches.push(FacePatch { pos, strip, points, h });
        }
    }
    Ok(patches)
}

fn patch_tabulation(disc: &Discretization, patch: &FacePatch) -> Tabulation {
    let mesh = disc.mesh();
    Tabulation::new(mesh, &mesh.leaf_bases()[patch.pos], patch.points.iter().map(|(x, _)| x))
}

fn patches_of(disc: &Discretization, pos: usize) -> &[FacePatch] {
    let start = disc.faces.partition_point(|p| p.pos < pos);
    let end = disc.faces.partition_point(|p| p.pos <= pos);
    &disc.faces[start..end]
}

/// β ∫ N_a N_b over the Dirichlet strips, for the constrained components.
pub(crate) fn penalty_matrix(disc: &Discretization, bcs: &BoundaryConditions, beta_scale: f64) -> CsrMatrix {
    let dim = disc.dim();
    assembly::assemble(disc, true, |pos| {
        let basis = &disc.mesh().leaf_bases()[pos];
        let n = basis.len();
        let mut ke = DMatrix::zeros(n * dim, n * dim);
        let mut any = false;
        for patch in patches_of(disc, pos) {
            let StripRef::Dirichlet(i) = patch.strip else { continue };
            let strip = &bcs.dirichlet[i];
            let beta = beta_scale / patch.h;
            let tab = patch_tabulation(disc, patch);
            let weights: Vec<f64> = patch.points.iter().map(|(_, w)| beta * w).collect();
            let m = assembly::scalar_element(&tab, &weights, &vec![0.0; weights.len()], dim);
            for c in 0..dim {
                if strip.components[c].is_some() {
                    let mut block = ke.view_mut((c * n, c * n), (n, n));
                    block += &m;
                    any = true;
                }
            }
        }
        any.then(|| (assembly::vector_dofs(&basis.dofs, dim), ke))
    })
}

/// Right-hand side β ∫ g N_a of the Dirichlet strips plus the tractions,
/// for load parameter `load` (applied to both).
pub(crate) fn boundary_rhs(disc: &Discretization, bcs: &BoundaryConditions, beta_scale: f64, load: f64) -> Vec<f64> {
    let dim = disc.dim();
    let mut rhs = vec![0.0; disc.mesh().ndof() * dim];
    if load == 0.0 {
        return rhs;
    }
    for patch in &disc.faces {
        let (values, scale): ([Option<f64>; 3], f64) = match patch.strip {
            StripRef::Dirichlet(i) => (bcs.dirichlet[i].components, beta_scale / patch.h),
            StripRef::Traction(i) => (bcs.tractions[i].traction.map(Some), 1.0),
        };
        if values.iter().all(|v| v.is_none_or(|v| v == 0.0)) {
            continue;
        }
        let tab = patch_tabulation(disc, patch);
        let dofs = &disc.mesh().leaf_bases()[patch.pos].dofs;
        for (q, (_, w)) in patch.points.iter().enumerate() {
            for c in 0..dim {
                let Some(v) = values[c] else { continue };
                let f = scale * w * v * load;
                for (a, &d) in dofs.iter().enumerate() {
                    rhs[d * dim + c] += f * tab.values[q * tab.n + a];
                }
            }
        }
    }
    rhs
}

/// Force exerted on the body by the loaded Dirichlet strips,
/// Σ β ∫ (g − u) over every constrained component.
pub(crate) fn reaction_force(
    disc: &Discretization,
    bcs: &BoundaryConditions,
    beta_scale: f64,
    u: &[f64],
    load: f64,
) -> [f64; 3] {
    let dim = disc.dim();
    let mut force = [0.0; 3];
    for patch in &disc.faces {
        let StripRef::Dirichlet(i) = patch.strip else { continue };
        let strip = &bcs.dirichlet[i];
        if !strip.is_loaded() {
            continue;
        }
        let beta = beta_scale / patch.h;
        let tab = patch_tabulation(disc, patch);
        let dofs = &disc.mesh().leaf_bases()[patch.pos].dofs;
        for (q, (_, w)) in patch.points.iter().enumerate() {
            for c in 0..dim {
                let Some(v) = strip.components[c] else { continue };
                let uc: f64 =
                    dofs.iter().enumerate().map(|(a, &d)| u[d * dim + c] * tab.values[q * tab.n + a]).sum();
                force[c] += beta * w * (v * load - uc);
            }
        }
    }
    force
}

/// Unit direction of the prescribed motion of the loaded strips.
pub(crate) fn load_direction(bcs: &BoundaryConditions) -> [f64; 3] {
    let mut d = [0.0; 3];
    if let Some(strip) = bcs.dirichlet.iter().find(|s| s.is_loaded()) {
        for c in 0..3 {
            d[c] = strip.components[c].unwrap_or(0.0);
        }
    } else if let Some(t) = bcs.tractions.first() {
        d = t.traction;
    }
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        d.map(|v| v / norm)
    } else {
        d
    }
}
