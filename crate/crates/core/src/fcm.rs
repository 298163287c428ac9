//! Finite Cell integration: octree subdivision of cut cells with the
//! fictitious-domain indicator α decided per quadrature point.

use crate::basis::tensor_gauss_rule;
use crate::geometry::{Aabb, Domain, Point};

/// Default fictitious-material scaling.
pub const DEFAULT_ALPHA_FCM: f64 = 1e-4;

/// Default octree depth for cut cells.
pub const DEFAULT_OCTREE_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Inside,
    Outside,
    Cut,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub x: Point,
    pub weight: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutCellRule {
    pub points: Vec<QuadPoint>,
    /// Deepest subdivision level reached.
    pub depth: usize,
}

impl CutCellRule {
    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|q| q.weight).sum()
    }

    /// Σ w over points in the physical domain.
    pub fn physical_volume(&self) -> f64 {
        self.points.iter().filter(|q| q.alpha == 1.0).map(|q| q.weight).sum()
    }

    /// Σ w·α.
    pub fn weighted_volume(&self) -> f64 {
        self.points.iter().map(|q| q.weight * q.alpha).sum()
    }
}

/// Classifies a cell by testing its corners and center.
pub fn classify_cell(cell: &Aabb, domain: &dyn Domain, dim: usize) -> CellClass {
    let mut inside = 0;
    let total = (1usize << dim) + 1;
    for k in 0..(1usize << dim) {
        if domain.is_physical(&cell.corner(k)) {
            inside += 1;
        }
    }
    if domain.is_physical(&cell.center()) {
        inside += 1;
    }
    match inside {
        0 => CellClass::Outside,
        n if n == total => CellClass::Inside,
        _ => CellClass::Cut,
    }
}

/// Quadrature for `cell`: uncut cells get one tensor Gauss rule with
/// `n` points per axis; cut cells are split recursively into `2^dim`
/// children up to `depth` levels and each leaf sub-cell gets the same rule.
pub fn octree_rule(
    cell: &Aabb,
    domain: &dyn Domain,
    depth: usize,
    n: usize,
    dim: usize,
    alpha_fcm: f64,
) -> CutCellRule {
    let reference = tensor_gauss_rule(n, dim);
    let mut points = Vec::with_capacity(reference.len());
    let mut reached = 0;
    match classify_cell(cell, domain, dim) {
        CellClass::Inside => push_rule(cell, &reference, dim, &mut points, |_| 1.0),
        CellClass::Outside => push_rule(cell, &reference, dim, &mut points, |_| alpha_fcm),
        CellClass::Cut => subdivide(cell, domain, 0, depth, &reference, dim, alpha_fcm, &mut points, &mut reached),
    }
    CutCellRule { points, depth: reached }
}

fn push_rule(
    cell: &Aabb,
    reference: &[(Point, f64)],
    dim: usize,
    out: &mut Vec<QuadPoint>,
    alpha: impl Fn(&Point) -> f64,
) {
    let jac = cell.volume(dim) / f64::powi(2.0, dim as i32);
    for (xi, w) in reference {
        let x = cell.from_reference(xi, dim);
        out.push(QuadPoint { x, weight: w * jac, alpha: alpha(&x) });
    }
}

#[allow(clippy::too_many_arguments)]
fn subdivide(
    cell: &Aabb,
    domain: &dyn Domain,
    level: usize,
    depth: usize,
    reference: &[(Point, f64)],
    dim: usize,
    alpha_fcm: f64,
    out: &mut Vec<QuadPoint>,
    reached: &mut usize,
) {
    *reached = (*reached).max(level);
    let pointwise = |x: &Point| if domain.is_physical(x) { 1.0 } else { alpha_fcm };
    if level == depth {
        push_rule(cell, reference, dim, out, pointwise);
        return;
    }
    for c in 0..(1usize << dim) {
        let child = cell.child(c, dim);
        match classify_cell(&child, domain, dim) {
            CellClass::Cut => subdivide(&child, domain, level + 1, depth, reference, dim, alpha_fcm, out, reached),
            CellClass::Inside => push_rule(&child, reference, dim, out, |_| 1.0),
            CellClass::Outside => push_rule(&child, reference, dim, out, |_| alpha_fcm),
        }
        *reached = (*reached).max(level + 1);
    }
}
