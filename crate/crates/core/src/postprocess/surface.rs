//! Iso-surfaces of the phase field by marching tetrahedra on a per-leaf
//! sampling grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Domain, Point};
use crate::mesh::{BasisScratch, MlhpMesh};

/// Default iso-level of the crack surface.
pub const CRACK_LEVEL: f64 = 0.03;

/// Minimum triangle area kept by [`CrackSurface::cleanup`] [mm²].
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Triangle soup with the iso-level and the step it was taken at.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrackSurface {
    pub triangles: Vec<[Point; 3]>,
    pub level: f64,
    pub step: usize,
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: &Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * norm(&cross(&sub(&t[1], &t[0]), &sub(&t[2], &t[0])))
}

impl CrackSurface {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    /// Drops triangles with non-finite coordinates or an area of at most
    /// [`MIN_TRIANGLE_AREA`].
    pub fn cleanup(&mut self) {
        self.triangles
            .retain(|t| t.iter().flatten().all(|c| c.is_finite()) && triangle_area(t) > MIN_TRIANGLE_AREA);
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(triangle_area).sum()
    }

    /// Distinct vertices in order of first appearance; coincident corners
    /// are merged by exact comparison.
    pub fn vertices(&self) -> Vec<Point> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for p in self.triangles.iter().flatten() {
            let key = p.map(|c| if c == 0.0 { 0u64 } else { c.to_bits() });
            if seen.insert(key) {
                out.push(*p);
            }
        }
        out
    }

    /// Unit normal of every triangle.
    pub fn normals(&self) -> Vec<Point> {
        self.triangles
            .iter()
            .map(|t| {
                let n = cross(&sub(&t[1], &t[0]), &sub(&t[2], &t[0]));
                let l = norm(&n);
                if l > 0.0 {
                    n.map(|c| c / l)
                } else {
                    [0.0; 3]
                }
            })
            .collect()
    }
}

/// Decomposition of the unit cube (corner bit 1 = x, 2 = y, 4 = z) into six
/// tetrahedra around the 0–7 diagonal; neighbouring cubes split their shared
/// faces identically.
const TETS: [[usize; 4]; 6] = [[0, 1, 3, 7], [0, 3, 2, 7], [0, 2, 6, 7], [0, 6, 4, 7], [0, 4, 5, 7], [0, 5, 1, 7]];

fn edge_point(a: (&Point, f64), b: (&Point, f64), level: f64) -> Point {
    // order endpoints canonically so a shared edge yields the same bits
    let (a, b) = if a.0.iter().zip(b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Greater)
    {
        (b, a)
    } else {
        (a, b)
    };
    let t = (level - a.1) / (b.1 - a.1);
    [0, 1, 2].map(|k| a.0[k] + t * (b.0[k] - a.0[k]))
}

fn contour_tet(p: [&Point; 4], v: [f64; 4], level: f64, out: &mut Vec<[Point; 3]>) {
    let below: Vec<usize> = (0..4).filter(|&i| v[i] < level).collect();
    let above: Vec<usize> = (0..4).filter(|&i| v[i] >= level).collect();
    let e = |i: usize, j: usize| edge_point((p[i], v[i]), (p[j], v[j]), level);
    let mut tris: Vec<[Point; 3]> = Vec::with_capacity(2);
    match (below.len(), above.len()) {
        (1, 3) | (3, 1) => {
            let (lone, rest) = if below.len() == 1 { (below[0], &above) } else { (above[0], &below) };
            tris.push([e(lone, rest[0]), e(lone, rest[1]), e(lone, rest[2])]);
        }
        (2, 2) => {
            let (a, b, c, d) = (below[0], below[1], above[0], above[1]);
            let q = [e(a, c), e(a, d), e(b, d), e(b, c)];
            tris.push([q[0], q[1], q[2]]);
            tris.push([q[0], q[2], q[3]]);
        }
        _ => return,
    }
    // orient towards increasing field values
    let hi = above.iter().map(|&i| p[i]).fold([0.0; 3], |acc, x| [acc[0] + x[0], acc[1] + x[1], acc[2] + x[2]]);
    let hi = hi.map(|c| c / above.len() as f64);
    for mut t in tris {
        let n = cross(&sub(&t[1], &t[0]), &sub(&t[2], &t[0]));
        let c = [0, 1, 2].map(|k| (t[0][k] + t[1][k] + t[2][k]) / 3.0);
        let d = sub(&hi, &c);
        if n[0] * d[0] + n[1] * d[1] + n[2] * d[2] < 0.0 {
            t.swap(1, 2);
        }
        out.push(t);
    }
}

/// Contours `field` over a list of cells. Every cell is sampled on a
/// regular grid with `samples` intervals per axis; `field(cell, x)` gives
/// the value at grid node `x` of cell number `cell`.
pub fn contour_cells(
    cells: &[Aabb],
    field: &(dyn Fn(usize, &Point) -> f64 + Sync),
    level: f64,
    samples: usize,
) -> Result<Vec<[Point; 3]>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sampling interval per axis".into()));
    }
    let m = samples;
    let n = m + 1;
    let parts: Vec<Vec<[Point; 3]>> = cells
        .par_iter()
        .enumerate()
        .map(|(ci, b)| {
            let node = |i: usize, j: usize, k: usize| -> Point {
                let f = |a: usize, idx: usize| {
                    if idx == m {
                        b.max[a]
                    } else {
                        b.min[a] + b.extent(a) * idx as f64 / m as f64
                    }
                };
                [f(0, i), f(1, j), f(2, k)]
            };
            let mut pts = Vec::with_capacity(n * n * n);
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        pts.push(node(i, j, k));
                    }
                }
            }
            let vals: Vec<f64> = pts.iter().map(|x| field(ci, x)).collect();
            let mut out = Vec::new();
            if vals.iter().all(|&v| v >= level) || vals.iter().all(|&v| v < level) {
                return out;
            }
            let id = |i, j, k| i + n * (j + n * k);
            for k in 0..m {
                for j in 0..m {
                    for i in 0..m {
                        let corner: [usize; 8] =
                            std::array::from_fn(|c| id(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)));
                        for tet in &TETS {
                            let p = tet.map(|c| &pts[corner[c]]);
                            let v = tet.map(|c| vals[corner[c]]);
                            contour_tet(p, v, level, &mut out);
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(parts.concat())
}

/// Boundary of `{s < level}` for the phase field with coefficients
/// `phase`; fictitious points count as intact (s = 1). Returns an empty
/// surface while the field stays above `level`.
pub fn extract_isosurface(
    mesh: &MlhpMesh,
    phase: &[f64],
    domain: &dyn Domain,
    level: f64,
    samples: usize,
    step: usize,
) -> Result<CrackSurface> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("iso-level {level} not in (0, 1)")));
    }
    if mesh.dim() != 3 {
        return Err(Error::InvalidArgument("iso-surfaces need a 3D mesh".into()));
    }
    if phase.len() != mesh.ndof() {
        return Err(Error::InvalidArgument("phase coefficients do not match the mesh".into()));
    }
    let leaves = mesh.leaves();
    let cells: Vec<Aabb> = leaves.iter().map(|&l| mesh.cell(l).bounds).collect();
    let field = |ci: usize, x: &Point| {
        if !domain.is_physical(x) {
            return 1.0;
        }
        let basis = &mesh.leaf_bases()[ci];
        let mut scratch = BasisScratch::default();
        let (mut v, mut g) = (Vec::new(), Vec::new());
        mesh.eval_leaf(basis, x, &mut scratch, &mut v, &mut g);
        basis.dofs.iter().zip(&v).map(|(&d, f)| phase[d] * f).sum()
    };
    let mut surface = CrackSurface { triangles: contour_cells(&cells, &field, level, samples)?, level, step };
    surface.cleanup();
    Ok(surface)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tet_cases() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let r = [&p[0], &p[1], &p[2], &p[3]];
        let mut out = Vec::new();
        contour_tet(r, [0.0, 1.0, 1.0, 1.0], 0.5, &mut out);
        assert_eq!(out.len(), 1);
        contour_tet(r, [0.0, 0.0, 1.0, 1.0], 0.5, &mut out);
        assert_eq!(out.len(), 3);
        contour_tet(r, [1.0; 4], 0.5, &mut out);
        assert_eq!(out.len(), 3);
    }
}
