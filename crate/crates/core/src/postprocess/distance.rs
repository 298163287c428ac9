//! Point sets, exact nearest-neighbour queries and Hausdorff-family
//! distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surface::CrackSurface;
use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub normals: Option<Vec<Point>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points, normals: None, colors: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points (and their attributes) for which `keep` holds.
    pub fn retain(&mut self, keep: impl Fn(&Point) -> bool) {
        let mask: Vec<bool> = self.points.iter().map(&keep).collect();
        fn filter<T: Copy>(v: &[T], mask: &[bool]) -> Vec<T> {
            v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect()
        }
        self.points = filter(&self.points, &mask);
        if let Some(n) = &self.normals {
            self.normals = Some(filter(n, &mask));
        }
        if let Some(c) = &self.colors {
            self.colors = Some(filter(c, &mask));
        }
    }
}

impl From<&CrackSurface> for PointSet {
    fn from(s: &CrackSurface) -> Self {
        PointSet::new(s.vertices())
    }
}

#[inline]
fn dist2(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

const BUCKET: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree over a point set. Queries return the same distances as
/// a linear scan, bit for bit.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Point>,
    nodes: Vec<Node>,
}

impl PointIndex {
    pub fn new(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut points = points.to_vec();
        let mut nodes = Vec::new();
        let n = points.len();
        Self::build(&mut points, 0, n, &mut nodes);
        Ok(Self { points, nodes })
    }

    fn build(points: &mut [Point], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        if end - start <= BUCKET {
            nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut points[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in slice.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |p, q| p[axis].total_cmp(&q[axis]));
        let value = slice[mid][axis];
        nodes.push(Node::Leaf { start, end });
        let left = Self::build(points, start, start + mid, nodes);
        let right = Self::build(points, start + mid, end, nodes);
        nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Euclidean distance from `q` to the nearest indexed point.
    pub fn nearest_distance(&self, q: &Point) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, q, &mut best);
        best.sqrt()
    }

    fn search(&self, node: usize, q: &Point, best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in &self.points[start..end] {
                    let d = dist2(p, q);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// d(a, B) for every a in A.
pub fn nearest_distances(a: &PointSet, b: &PointSet) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let index = PointIndex::new(&b.points)?;
    Ok(a.points.par_iter().map(|p| index.nearest_distance(p)).collect())
}

/// d(a, B) by linear scan; reference for the indexed queries.
pub fn nearest_distances_brute_force(a: &PointSet, b: &PointSet) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(a.points.iter().map(|p| b.points.iter().map(|q| dist2(q, p)).fold(f64::INFINITY, f64::min).sqrt()).collect())
}

/// h(A, B) = max_a d(a, B).
pub fn directed_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    Ok(nearest_distances(a, b)?.into_iter().fold(0.0, f64::max))
}

/// H(A, B) = max(h(A, B), h(B, A)).
pub fn hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// h_MHD(A, B) = mean_a d(a, B).
pub fn directed_modified_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    let d = nearest_distances(a, b)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// H_MHD(A, B) = max(h_MHD(A, B), h_MHD(B, A)).
pub fn modified_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    Ok(directed_modified_hausdorff(a, b)?.max(directed_modified_hausdorff(b, a)?))
}

/// Distances of the surface vertices to the cloud, raw and divided by
/// `notch_length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistances {
    pub vertices: Vec<Point>,
    pub distances: Vec<f64>,
    pub notch_length: f64,
}

impl SurfaceDistances {
    pub fn normalized(&self) -> Vec<f64> {
        self.distances.iter().map(|d| d / self.notch_length).collect()
    }

    pub fn max(&self) -> f64 {
        self.distances.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len() as f64
    }
}

pub fn surface_to_cloud_distances(surface: &CrackSurface, cloud: &PointSet, notch_length: f64) -> Result<SurfaceDistances> {
    if !(notch_length > 0.0) {
        return Err(Error::InvalidArgument("notch length must be positive".into()));
    }
    let vertices = PointSet::from(surface);
    let distances = nearest_distances(&vertices, cloud)?;
    Ok(SurfaceDistances { vertices: vertices.points, distances, notch_length })
}
