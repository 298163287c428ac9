//! Multi-level hp mesh: a structured base grid whose cells can be overlaid
//! by finer, superposed grids.
//!
//! Every cell of every level carries the full tensor-product basis of
//! order `p`. Topological entities (vertices, edges, faces, cell interiors)
//! are identified per level by "doubled" integer coordinates: along each axis
//! an even coordinate `2i` denotes the grid plane `i`, an odd one `2i + 1`
//! the open interval between planes `i` and `i + 1`. Two rules decide which
//! entities carry degrees of freedom:
//!
//! * an overlay entity on the interface between refined and unrefined cells
//!   of its level is switched off, so each overlay vanishes on its patch
//!   boundary and the sum of all levels stays C0;
//! * an entity with an active entity anywhere below it (in any finer level
//!   and inside its relative interior) is switched off, which keeps the
//!   superposed functions linearly independent.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::basis::{tensor_gauss_rule, ShapeSet};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point};

pub type CellId = usize;

/// Default cap on the overlay depth.
pub const DEFAULT_MAX_DEPTH: u8 = 5;

#[derive(Debug, Clone)]
pub struct Cell {
    pub level: u8,
    /// Integer cell coordinates within the level grid.
    pub index: [u32; 3],
    pub parent: Option<CellId>,
    pub children: Option<[CellId; 8]>,
    pub bounds: Aabb,
}

impl Cell {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Topological entity of one level, in doubled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityKey {
    pub level: u8,
    pub coords: [u32; 3],
}

impl EntityKey {
    /// Number of axes the entity extends along.
    pub fn extent_dim(&self, dim: usize) -> usize {
        self.coords[..dim].iter().filter(|&&c| c % 2 == 1).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EntityState {
    /// Survives the overlay-boundary rule.
    pub compatible: bool,
    /// Some entity of a finer level below this one is active.
    pub covered: bool,
    pub active: bool,
    pub first_dof: usize,
}

/// Active scalar shape functions seen by one leaf: the leaf's own functions
/// plus those of all its ancestors.
#[derive(Debug, Clone)]
pub struct LeafBasis {
    pub leaf: CellId,
    /// Ancestor chain from the base cell down to the leaf.
    pub chain: Vec<CellId>,
    /// `(position in chain, tensor mode)` of each active function.
    pub entries: Vec<(u8, u16)>,
    /// Global scalar dof of each active function.
    pub dofs: Vec<usize>,
}

impl LeafBasis {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
}

/// Scratch buffers for basis evaluation.
#[derive(Debug, Clone, Default)]
pub struct BasisScratch {
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct MlhpMesh {
    dim: usize,
    domain: Aabb,
    base: [usize; 3],
    order: usize,
    max_depth: u8,
    shapes: ShapeSet,
    cells: Vec<Cell>,
    lookup: HashMap<(u8, [u32; 3]), CellId>,
    leaves: Vec<CellId>,
    leaf_position: HashMap<CellId, usize>,
    entities: BTreeMap<EntityKey, EntityState>,
    layouts: Vec<LeafBasis>,
    ndof: usize,
}

/// Per-level element and dof counts.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelStats {
    pub level: u8,
    pub cells: usize,
    pub leaves: usize,
    pub active_entities: usize,
    pub dofs: usize,
}

impl MlhpMesh {
    /// Uniform base grid of `nel` cells over `domain`, order `p`, no overlays.
    pub fn create_base_grid(domain: Aabb, nel: [usize; 3], order: usize, dim: usize) -> Result<Self> {
        let shapes = ShapeSet::new(order, dim)?;
        if nel[..dim].iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!(
                "base grid needs at least one cell per axis, got {:?}",
                &nel[..dim]
            )));
        }
        if (0..dim).any(|a| !(domain.extent(a) > 0.0)) {
            return Err(Error::InvalidArgument("degenerate mesh domain".into()));
        }
        let mut base = [1usize; 3];
        base[..dim].copy_from_slice(&nel[..dim]);
        let mut mesh = Self {
            dim,
            domain,
            base,
            order,
            max_depth: DEFAULT_MAX_DEPTH,
            shapes,
            cells: Vec::new(),
            lookup: HashMap::new(),
            leaves: Vec::new(),
            leaf_position: HashMap::new(),
            entities: BTreeMap::new(),
            layouts: Vec::new(),
            ndof: 0,
        };
        for k in 0..base[2] {
            for j in 0..base[1] {
                for i in 0..base[0] {
                    let index = [i as u32, j as u32, k as u32];
                    let bounds = mesh.cell_bounds(0, index);
                    mesh.push_cell(Cell { level: 0, index, parent: None, children: None, bounds });
                }
            }
        }
        mesh.rebuild();
        Ok(mesh)
    }

    pub fn with_max_depth(mut self, depth: u8) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn max_depth(&self) -> u8 {
        self.max_depth
    }

    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    pub fn base(&self) -> [usize; 3] {
        self.base
    }

    pub fn shapes(&self) -> &ShapeSet {
        &self.shapes
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id]
    }

    pub fn leaves(&self) -> &[CellId] {
        &self.leaves
    }

    /// Number of active scalar shape functions.
    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn entities(&self) -> &BTreeMap<EntityKey, EntityState> {
        &self.entities
    }

    pub fn leaf_basis(&self, leaf: CellId) -> &LeafBasis {
        &self.layouts[self.leaf_position[&leaf]]
    }

    pub fn leaf_bases(&self) -> &[LeafBasis] {
        &self.layouts
    }

    pub fn find_cell(&self, level: u8, index: [u32; 3]) -> Option<CellId> {
        self.lookup.get(&(level, index)).copied()
    }

    fn level_cells(&self, level: u8, axis: usize) -> u32 {
        (self.base[axis] as u32) << level
    }

    fn cell_bounds(&self, level: u8, index: [u32; 3]) -> Aabb {
        let mut b = self.domain;
        for a in 0..self.dim {
            let n = self.level_cells(level, a) as f64;
            let h = self.domain.extent(a) / n;
            b.min[a] = self.domain.min[a] + index[a] as f64 * h;
            b.max[a] = if index[a] as f64 + 1.0 == n {
                self.domain.max[a]
            } else {
                self.domain.min[a] + (index[a] as f64 + 1.0) * h
            };
        }
        b
    }

    fn push_cell(&mut self, cell: Cell) -> CellId {
        let id = self.cells.len();
        self.lookup.insert((cell.level, cell.index), id);
        self.cells.push(cell);
        id
    }

    /// Splits a leaf into `2^dim` overlay children. No-op for non-leaves and
    /// cells at the maximum depth. Activity flags are not updated.
    fn split(&mut self, id: CellId) -> bool {
        let cell = &self.cells[id];
        if !cell.is_leaf() || cell.level >= self.max_depth {
            return false;
        }
        let level = cell.level + 1;
        let parent_index = cell.index;
        let nchild = 1usize << self.dim;
        let mut children = [usize::MAX; 8];
        for (c, slot) in children.iter_mut().enumerate().take(nchild) {
            let mut index = [0u32; 3];
            for a in 0..self.dim {
                index[a] = 2 * parent_index[a] + ((c >> a) & 1) as u32;
            }
            let bounds = self.cell_bounds(level, index);
            *slot = self.push_cell(Cell { level, index, parent: Some(id), children: None, bounds });
        }
        self.cells[id].children = Some(children);
        true
    }

    /// Refines every element intersecting `region` until it carries an
    /// overlay tree of depth `depth` (capped at the maximum depth).
    pub fn refine_region(&mut self, region: &dyn Fn(&Aabb) -> bool, depth: u8) {
        let depth = depth.min(self.max_depth);
        let mut changed = false;
        for level in 0..depth {
            let candidates: Vec<CellId> = self
                .leaves_snapshot()
                .into_iter()
                .filter(|&id| self.cells[id].level == level && region(&self.cells[id].bounds))
                .collect();
            for id in candidates {
                changed |= self.split(id);
            }
        }
        if changed {
            self.rebuild();
        }
    }

    /// Refines the given leaves by one level. Returns the number split.
    pub fn refine_leaves(&mut self, leaves: &[CellId]) -> usize {
        let mut count = 0;
        for &id in leaves {
            if self.split(id) {
                count += 1;
            }
        }
        if count > 0 {
            self.rebuild();
        }
        count
    }

    fn leaves_snapshot(&self) -> Vec<CellId> {
        (0..self.cells.len()).filter(|&id| self.cells[id].is_leaf()).collect()
    }

    /// Sample points used to test a leaf against a refinement indicator:
    /// the `(p+1)^d` Gauss points and the cell vertices.
    pub fn indicator_points(&self, leaf: CellId) -> Vec<Point> {
        let b = &self.cells[leaf].bounds;
        let mut pts: Vec<Point> = tensor_gauss_rule(self.order + 1, self.dim)
            .into_iter()
            .map(|(xi, _)| b.from_reference(&xi, self.dim))
            .collect();
        for k in 0..(1usize << self.dim) {
            pts.push(b.corner(k));
        }
        pts
    }

    /// Leaves whose minimum sampled `field` value is at or below `threshold`
    /// and which can still be refined.
    pub fn mark_leaves(&self, field: &dyn Fn(CellId, &Point) -> f64, threshold: f64) -> Vec<CellId> {
        self.leaves
            .iter()
            .copied()
            .filter(|&leaf| self.cells[leaf].level < self.max_depth)
            .filter(|&leaf| {
                self.indicator_points(leaf)
                    .iter()
                    .map(|x| field(leaf, x))
                    .fold(f64::INFINITY, f64::min)
                    <= threshold
            })
            .collect()
    }

    /// New mesh snapshot where every marked leaf gained one level. Cell ids
    /// of the old mesh stay valid in the new one.
    pub fn dynamic_refine(&self, field: &dyn Fn(CellId, &Point) -> f64, threshold: f64) -> (MlhpMesh, Vec<CellId>) {
        let marked = self.mark_leaves(field, threshold);
        let mut next = self.clone();
        next.refine_leaves(&marked);
        (next, marked)
    }

    /// Leaf containing `x` (points outside are clamped to the domain).
    pub fn locate(&self, x: &Point) -> CellId {
        let mut index = [0u32; 3];
        for a in 0..self.dim {
            let n = self.base[a];
            let t = (x[a] - self.domain.min[a]) / self.domain.extent(a) * n as f64;
            index[a] = (t.floor().max(0.0) as usize).min(n - 1) as u32;
        }
        let mut id = self.lookup[&(0, index)];
        while let Some(children) = self.cells[id].children {
            let c = self.cells[id].bounds.center();
            let mut k = 0;
            for a in 0..self.dim {
                if x[a] >= c[a] {
                    k |= 1 << a;
                }
            }
            id = children[k];
        }
        id
    }

    /// Entity key of tensor mode `mode` on cell `id`, plus the mode's index
    /// inside the entity.
    fn mode_entity(&self, id: CellId, mode: usize) -> (EntityKey, usize) {
        let cell = &self.cells[id];
        let idx = self.shapes.mode_indices(mode);
        let mut coords = [0u32; 3];
        let mut local = 0usize;
        let mut stride = 1usize;
        for a in 0..self.dim {
            coords[a] = 2 * cell.index[a]
                + match idx[a] {
                    0 => 0,
                    1 => 2,
                    _ => 1,
                };
            if idx[a] >= 2 {
                local += (idx[a] - 2) * stride;
                stride *= self.order - 1;
            }
        }
        (EntityKey { level: cell.level, coords }, local)
    }

    fn modes_per_entity(&self, key: &EntityKey) -> usize {
        (self.order - 1).pow(key.extent_dim(self.dim) as u32)
    }

    fn sub_entities(&self, key: &EntityKey) -> Vec<EntityKey> {
        let mut out = vec![EntityKey { level: key.level + 1, coords: [0; 3] }];
        for a in 0..self.dim {
            let q = key.coords[a];
            let options: Vec<u32> = if q % 2 == 0 { vec![2 * q] } else { vec![2 * q - 1, 2 * q, 2 * q + 1] };
            let mut next = Vec::with_capacity(out.len() * options.len());
            for e in &out {
                for &o in &options {
                    let mut e2 = *e;
                    e2.coords[a] = o;
                    next.push(e2);
                }
            }
            out = next;
        }
        out
    }

    /// Re-derives leaves, activity flags, dof numbering and leaf layouts.
    fn rebuild(&mut self) {
        let dim = self.dim;
        self.leaves = self.leaves_snapshot();
        self.leaf_position = self.leaves.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut entities: BTreeMap<EntityKey, EntityState> = BTreeMap::new();
        let nent = 3usize.pow(dim as u32);
        for cell in &self.cells {
            for e in 0..nent {
                let mut coords = [0u32; 3];
                let mut rest = e;
                for a in 0..dim {
                    coords[a] = 2 * cell.index[a] + (rest % 3) as u32;
                    rest /= 3;
                }
                entities.entry(EntityKey { level: cell.level, coords }).or_insert(EntityState {
                    compatible: true,
                    covered: false,
                    active: false,
                    first_dof: usize::MAX,
                });
            }
        }

        // Overlay boundary rule.
        for cell in &self.cells {
            if cell.level == 0 {
                continue;
            }
            for a in 0..dim {
                for side in 0..2u32 {
                    let mut nb = cell.index;
                    if side == 0 {
                        if nb[a] == 0 {
                            continue;
                        }
                        nb[a] -= 1;
                    } else {
                        nb[a] += 1;
                        if nb[a] >= self.level_cells(cell.level, a) {
                            continue;
                        }
                    }
                    if self.lookup.contains_key(&(cell.level, nb)) {
                        continue;
                    }
                    let plane = 2 * cell.index[a] + 2 * side;
                    for e in 0..nent {
                        let mut coords = [0u32; 3];
                        let mut rest = e;
                        for b in 0..dim {
                            coords[b] = 2 * cell.index[b] + (rest % 3) as u32;
                            rest /= 3;
                        }
                        if coords[a] != plane {
                            continue;
                        }
                        if let Some(s) = entities.get_mut(&EntityKey { level: cell.level, coords }) {
                            s.compatible = false;
                        }
                    }
                }
            }
        }

        // Linear independence rule, finest level first.
        let keys: Vec<EntityKey> = entities.keys().rev().copied().collect();
        for key in keys {
            let covered = self.sub_entities(&key).iter().any(|sub| {
                entities.get(sub).is_some_and(|s| s.active || s.covered)
            });
            let s = entities.get_mut(&key).expect("entity present");
            s.covered = covered;
            s.active = s.compatible && !covered;
        }

        let mut next = 0usize;
        for (key, s) in entities.iter_mut() {
            if s.active {
                s.first_dof = next;
                next += (self.order - 1).pow(key.extent_dim(dim) as u32);
            }
        }
        self.entities = entities;
        self.ndof = next;

        let nmodes = self.shapes.len();
        let mut layouts = Vec::with_capacity(self.leaves.len());
        for &leaf in &self.leaves {
            let mut chain = vec![leaf];
            while let Some(p) = self.cells[*chain.last().unwrap()].parent {
                chain.push(p);
            }
            chain.reverse();
            let mut entries = Vec::new();
            let mut dofs = Vec::new();
            for (pos, &cid) in chain.iter().enumerate() {
                for mode in 0..nmodes {
                    let (key, local) = self.mode_entity(cid, mode);
                    let state = &self.entities[&key];
                    if state.active {
                        debug_assert!(local < self.modes_per_entity(&key));
                        entries.push((pos as u8, mode as u16));
                        dofs.push(state.first_dof + local);
                    }
                }
            }
            layouts.push(LeafBasis { leaf, chain, entries, dofs });
        }
        self.layouts = layouts;
    }

    /// Evaluates the active functions of `basis` at the physical point `x`.
    /// Gradients are with respect to physical coordinates.
    pub fn eval_leaf(
        &self,
        basis: &LeafBasis,
        x: &Point,
        scratch: &mut BasisScratch,
        values: &mut Vec<f64>,
        grads: &mut Vec<[f64; 3]>,
    ) {
        let dim = self.dim;
        let nmodes = self.shapes.len();
        let nchain = basis.chain.len();
        scratch.values.resize(nmodes * nchain, 0.0);
        scratch.grads.resize(nmodes * nchain, [0.0; 3]);
        for (pos, &cid) in basis.chain.iter().enumerate() {
            let b = &self.cells[cid].bounds;
            let xi = b.to_reference(x, dim);
            let range = pos * nmodes..(pos + 1) * nmodes;
            self.shapes.eval_into(&xi, &mut scratch.values[range.clone()], &mut scratch.grads[range.clone()]);
            for g in &mut scratch.grads[range] {
                for a in 0..dim {
                    g[a] *= 2.0 / b.extent(a);
                }
            }
        }
        values.clear();
        grads.clear();
        for &(pos, mode) in &basis.entries {
            let k = pos as usize * nmodes + mode as usize;
            values.push(scratch.values[k]);
            grads.push(scratch.grads[k]);
        }
    }

    /// Value and gradient of the scalar field with coefficients `coeffs` at `x`.
    pub fn evaluate(&self, coeffs: &[f64], x: &Point) -> (f64, Point) {
        let leaf = self.locate(x);
        self.evaluate_on_leaf(leaf, coeffs, x)
    }

    /// Like [`evaluate`](Self::evaluate) but using the basis of a given leaf.
    pub fn evaluate_on_leaf(&self, leaf: CellId, coeffs: &[f64], x: &Point) -> (f64, Point) {
        let basis = self.leaf_basis(leaf);
        let mut scratch = BasisScratch::default();
        let mut v = Vec::new();
        let mut g = Vec::new();
        self.eval_leaf(basis, x, &mut scratch, &mut v, &mut g);
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        for (i, &dof) in basis.dofs.iter().enumerate() {
            val += coeffs[dof] * v[i];
            for a in 0..3 {
                grad[a] += coeffs[dof] * g[i][a];
            }
        }
        (val, grad)
    }

    pub fn level_stats(&self) -> Vec<LevelStats> {
        let maxl = self.cells.iter().map(|c| c.level).max().unwrap_or(0);
        (0..=maxl)
            .map(|level| {
                let cells = self.cells.iter().filter(|c| c.level == level).count();
                let leaves = self.leaves.iter().filter(|&&l| self.cells[l].level == level).count();
                let active: Vec<_> =
                    self.entities.iter().filter(|(k, s)| k.level == level && s.active).collect();
                let dofs = active.iter().map(|(k, _)| self.modes_per_entity(k)).sum();
                LevelStats { level, cells, leaves, active_entities: active.len(), dofs }
            })
            .collect()
    }

    /// Mesh statistics as CSV: one row per level plus a total row.
    pub fn stats_csv(&self) -> String {
        let mut out = String::from("# vnotch mesh-stats v1\nlevel,cells,leaves,active_entities,dofs\n");
        for s in self.level_stats() {
            let _ = writeln!(out, "{},{},{},{},{}", s.level, s.cells, s.leaves, s.active_entities, s.dofs);
        }
        let _ = writeln!(out, "total,{},{},{},{}", self.cells.len(), self.leaves.len(),
            self.entities.values().filter(|s| s.active).count(), self.ndof);
        out
    }

    /// Smallest leaf edge length along axis 0.
    pub fn min_leaf_size(&self) -> f64 {
        self.leaves
            .iter()
            .map(|&l| self.cells[l].bounds.extent(0))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(dim: usize) -> Aabb {
        let mut max = [1.0; 3];
        for m in max.iter_mut().skip(dim) {
            *m = 0.0;
        }
        Aabb::new([0.0; 3], max)
    }

    #[test]
    fn benchmark_base_grid() {
        let m = MlhpMesh::create_base_grid(
            Aabb::new([0.0; 3], [80.0, 20.0, 10.0]),
            [20, 5, 2],
            3,
            3,
        )
        .unwrap();
        assert_eq!(m.leaves().len(), 200);
        let b = &m.cell(m.leaves()[0]).bounds;
        assert_abs_diff_eq!(b.extent(0), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.extent(1), 4.0, epsilon = 1e-12);
        // two cells through the 10 mm thickness
        assert_abs_diff_eq!(b.extent(2), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn single_trilinear() {
        let m = MlhpMesh::create_base_grid(unit(3), [1, 1, 1], 1, 3).unwrap();
        assert_eq!(m.ndof(), 8);
        assert_eq!(m.leaf_basis(0).len(), 8);
    }

    #[test]
    fn two_elements_share_face_nodes() {
        let m = MlhpMesh::create_base_grid(Aabb::new([0.0; 3], [2.0, 1.0, 1.0]), [2, 1, 1], 1, 3).unwrap();
        assert_eq!(m.ndof(), 12);
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(MlhpMesh::create_base_grid(unit(2), [0, 1, 1], 1, 2).is_err());
        assert!(MlhpMesh::create_base_grid(unit(2), [1, 1, 1], 0, 2).is_err());
    }

    #[test]
    fn refine_nothing_is_identity() {
        let mut m = MlhpMesh::create_base_grid(unit(3), [2, 2, 2], 2, 3).unwrap();
        let ndof = m.ndof();
        m.refine_region(&|_| false, 3);
        assert_eq!(m.ndof(), ndof);
        assert_eq!(m.cells().len(), 8);
    }

    #[test]
    fn corner_refinement_adds_eight_children() {
        let mut m = MlhpMesh::create_base_grid(unit(3), [2, 2, 2], 1, 3).unwrap();
        m.refine_region(&|b| b.min == [0.0; 3], 1);
        assert_eq!(m.cells().len(), 16);
        assert_eq!(m.leaves().len(), 15);
        // children exactly tile the parent
        let parent = m.cell(0);
        let vol: f64 = parent.children.unwrap().iter().map(|&c| m.cell(c).bounds.volume(3)).sum();
        assert_abs_diff_eq!(vol, parent.bounds.volume(3), epsilon = 1e-15);
    }

    #[test]
    fn leaf_size_after_depth_four() {
        let mut m = MlhpMesh::create_base_grid(
            Aabb::new([0.0; 3], [80.0, 20.0, 10.0]),
            [20, 5, 2],
            1,
            3,
        )
        .unwrap();
        m.refine_region(&|b| b.contains(&[40.0, 6.0, 5.0], 3), 4);
        assert_abs_diff_eq!(m.min_leaf_size(), 0.25, epsilon = 1e-12);
        // idempotent
        let n = m.cells().len();
        m.refine_region(&|b| b.contains(&[40.0, 6.0, 5.0], 3), 4);
        assert_eq!(m.cells().len(), n);
    }

    /// Flags must satisfy both activity rules after any refinement.
    fn check_flag_rules(m: &MlhpMesh) {
        for (key, s) in m.entities() {
            if s.active {
                assert!(s.compatible);
                for sub in m.sub_entities(key) {
                    if let Some(ss) = m.entities().get(&sub) {
                        assert!(!ss.active && !ss.covered, "{key:?} active above active {sub:?}");
                    }
                }
            }
        }
        for cell in m.cells().iter().filter(|c| c.level > 0) {
            for a in 0..m.dim() {
                for side in 0..2u32 {
                    let mut nb = cell.index;
                    if side == 0 {
                        if nb[a] == 0 {
                            continue;
                        }
                        nb[a] -= 1;
                    } else {
                        nb[a] += 1;
                        if nb[a] >= m.level_cells(cell.level, a) {
                            continue;
                        }
                    }
                    if m.find_cell(cell.level, nb).is_some() {
                        continue;
                    }
                    for (key, s) in m.entities().range(
                        EntityKey { level: cell.level, coords: [0; 3] }..EntityKey { level: cell.level + 1, coords: [0; 3] },
                    ) {
                        let on_face = key.coords[a] == 2 * cell.index[a] + 2 * side
                            && (0..m.dim()).all(|b| {
                                b == a || (key.coords[b] >= 2 * cell.index[b] && key.coords[b] <= 2 * cell.index[b] + 2)
                            });
                        if on_face {
                            assert!(!s.active, "overlay boundary entity {key:?} active");
                        }
                    }
                }
            }
        }
    }

    fn random_refined(dim: usize, p: usize, seed: u64) -> MlhpMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MlhpMesh::create_base_grid(unit(dim), [2, 2, 2], p, dim).unwrap();
        for _ in 0..3 {
            let leaves = m.leaves().to_vec();
            let pick: Vec<_> = leaves.into_iter().filter(|_| rng.gen_bool(0.35)).collect();
            m.refine_leaves(&pick);
        }
        m
    }

    #[test]
    fn flag_rules_hold_on_random_refinements() {
        for seed in 0..6 {
            for dim in 1..=3 {
                check_flag_rules(&random_refined(dim, 2, seed));
            }
        }
    }

    #[test]
    fn interface_continuity() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for dim in 2..=3 {
            for seed in 0..3 {
                let m = random_refined(dim, 3, seed + 10);
                let coeffs: Vec<f64> = (0..m.ndof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
                let mut checked = 0;
                for &la in m.leaves() {
                    for &lb in m.leaves() {
                        let (ba, bb) = (m.cell(la).bounds, m.cell(lb).bounds);
                        for a in 0..dim {
                            if (ba.max[a] - bb.min[a]).abs() > 1e-14 {
                                continue;
                            }
                            // overlap of the shared face
                            let mut lo = [0.0; 3];
                            let mut hi = [0.0; 3];
                            let mut ok = true;
                            for b in (0..dim).filter(|&b| b != a) {
                                lo[b] = ba.min[b].max(bb.min[b]);
                                hi[b] = ba.max[b].min(bb.max[b]);
                                ok &= hi[b] - lo[b] > 1e-12;
                            }
                            if !ok {
                                continue;
                            }
                            let mut x = [0.0; 3];
                            x[a] = ba.max[a];
                            for b in (0..dim).filter(|&b| b != a) {
                                x[b] = rng.gen_range(lo[b]..hi[b]);
                            }
                            let (va, _) = m.evaluate_on_leaf(la, &coeffs, &x);
                            let (vb, _) = m.evaluate_on_leaf(lb, &coeffs, &x);
                            assert!((va - vb).abs() <= 1e-10 * scale.max(1.0), "jump {va} vs {vb}");
                            checked += 1;
                        }
                    }
                }
                assert!(checked > 10);
            }
        }
    }

    fn mass_matrix(m: &MlhpMesh) -> nalgebra::DMatrix<f64> {
        let n = m.ndof();
        let mut mass = nalgebra::DMatrix::zeros(n, n);
        let rule = tensor_gauss_rule(m.order() + 1, m.dim());
        let mut scratch = BasisScratch::default();
        let (mut v, mut g) = (Vec::new(), Vec::new());
        for basis in m.leaf_bases() {
            let b = m.cell(basis.leaf).bounds;
            let jac = b.volume(m.dim()) / 2f64.powi(m.dim() as i32);
            for (xi, w) in &rule {
                let x = b.from_reference(xi, m.dim());
                m.eval_leaf(basis, &x, &mut scratch, &mut v, &mut g);
                for i in 0..v.len() {
                    for j in 0..v.len() {
                        mass[(basis.dofs[i], basis.dofs[j])] += w * jac * v[i] * v[j];
                    }
                }
            }
        }
        mass
    }

    #[test]
    fn mass_matrix_nonsingular_on_refined_meshes() {
        for dim in 1..=3 {
            for seed in 0..3 {
                let m = random_refined(dim, 2, seed + 40);
                if m.ndof() > 900 {
                    continue;
                }
                let mass = mass_matrix(&m);
                let eig = mass.symmetric_eigenvalues();
                let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = eig.iter().cloned().fold(0.0, f64::max);
                assert!(min > 1e-12 * max, "dim {dim} seed {seed}: λmin {min} λmax {max}");
            }
        }
    }

    #[test]
    fn refined_space_reproduces_linear_fields() {
        // The leaf-wise piecewise linears must still be representable: fit
        // x + 2y by L2 projection and check pointwise.
        let m = random_refined(2, 1, 77);
        let mass = mass_matrix(&m);
        let n = m.ndof();
        let mut rhs = nalgebra::DVector::zeros(n);
        let rule = tensor_gauss_rule(3, 2);
        let mut scratch = BasisScratch::default();
        let (mut v, mut g) = (Vec::new(), Vec::new());
        for basis in m.leaf_bases() {
            let b = m.cell(basis.leaf).bounds;
            let jac = b.volume(2) / 4.0;
            for (xi, w) in &rule {
                let x = b.from_reference(xi, 2);
                m.eval_leaf(basis, &x, &mut scratch, &mut v, &mut g);
                for i in 0..v.len() {
                    rhs[basis.dofs[i]] += w * jac * v[i] * (x[0] + 2.0 * x[1]);
                }
            }
        }
        let c = mass.cholesky().unwrap().solve(&rhs);
        let coeffs: Vec<f64> = c.iter().copied().collect();
        for x in [[0.1, 0.2, 0.0], [0.77, 0.31, 0.0], [0.5, 0.5, 0.0]] {
            let (val, _) = m.evaluate(&coeffs, &x);
            assert_abs_diff_eq!(val, x[0] + 2.0 * x[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn dynamic_refinement_marks_low_values() {
        let m = MlhpMesh::create_base_grid(unit(2), [4, 4, 1], 1, 2).unwrap();
        let (same, marked) = m.dynamic_refine(&|_, _| 1.0, 0.7);
        assert!(marked.is_empty());
        assert_eq!(same.cells().len(), m.cells().len());

        let target = m.locate(&[0.6, 0.1, 0.0]);
        let (next, marked) = m.dynamic_refine(
            &|leaf, _| if leaf == target { 0.5 } else { 1.0 },
            0.7,
        );
        assert_eq!(marked, vec![target]);
        assert_eq!(next.cells().len(), m.cells().len() + 4);
        check_flag_rules(&next);
    }

    #[test]
    fn dynamic_refinement_matches_dense_sampling() {
        let m = MlhpMesh::create_base_grid(unit(2), [8, 8, 1], 2, 2).unwrap();
        let center = [0.43, 0.58];
        let field = |x: &Point| {
            let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
            1.0 - 0.9 * (-r2 / 0.01).exp()
        };
        let (_, marked) = m.dynamic_refine(&|_, x| field(x), 0.7);
        // Dense-sampling oracle: 41 × 41 samples per element.
        let mut dense = Vec::new();
        for &leaf in m.leaves() {
            let b = m.cell(leaf).bounds;
            let mut min = f64::INFINITY;
            for i in 0..=40 {
                for j in 0..=40 {
                    let x = [
                        b.min[0] + b.extent(0) * i as f64 / 40.0,
                        b.min[1] + b.extent(1) * j as f64 / 40.0,
                        0.0,
                    ];
                    min = min.min(field(&x));
                }
            }
            if min <= 0.7 {
                dense.push(leaf);
            }
        }
        assert_eq!(marked, dense);
    }

    #[test]
    fn refinement_never_removes_overlays() {
        let mut m = random_refined(2, 2, 5);
        let before: Vec<(u8, [u32; 3])> = m.cells().iter().map(|c| (c.level, c.index)).collect();
        let leaf = m.leaves()[0];
        m.refine_leaves(&[leaf]);
        for key in before {
            assert!(m.find_cell(key.0, key.1).is_some());
        }
    }

    #[test]
    fn stats_csv_has_total_row() {
        let mut m = MlhpMesh::create_base_grid(unit(2), [2, 2, 1], 2, 2).unwrap();
        m.refine_region(&|b| b.min[0] == 0.0 && b.min[1] == 0.0, 1);
        let csv = m.stats_csv();
        assert!(csv.starts_with("# vnotch mesh-stats v1\n"));
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with("total,8,7,"));
        assert!(last.ends_with(&format!(",{}", m.ndof())));
    }
}
