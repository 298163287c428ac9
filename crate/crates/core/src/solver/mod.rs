//! Coupled elastic / phase-field solver on FCM quadrature: penalty
//! Dirichlet strips, staggered iteration with the energy criterion,
//! quasi-static load stepping and Newmark time integration.

mod assembly;
pub mod boundary;
pub mod dynamics;
pub mod snapshot;
pub mod staggered;
mod transfer;

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fcm::{octree_rule, QuadPoint, DEFAULT_ALPHA_FCM, DEFAULT_OCTREE_DEPTH};
use crate::geometry::{Domain, Point};
use crate::linalg::{LinearSolverKind, SparsityPattern, SpdSolver};
use crate::mesh::MlhpMesh;
use crate::model::{DegradationKind, HistoryField, MaterialParams, ToughnessField};
use crate::Result;

pub use boundary::{BoundaryConditions, DirichletStrip, TractionStrip};
pub use dynamics::{dynamic_run, DynamicConfig, DynamicFrame, Trajectory};
pub use staggered::{
    failure_detected, quasi_static_run, CurvePoint, LoadDisplacementCurve, LoadSchedule, RefinementSettings,
    Simulation, StepReport,
};
pub use transfer::transfer_state;

/// Finite Cell quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcmSettings {
    pub alpha: f64,
    pub octree_depth: usize,
    /// Gauss points per axis and sub-cell; `None` means `p + 1`.
    pub points_per_axis: Option<usize>,
}

impl Default for FcmSettings {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA_FCM, octree_depth: DEFAULT_OCTREE_DEPTH, points_per_axis: None }
    }
}

/// Everything except the mesh that defines a boundary value problem.
#[derive(Clone)]
pub struct Problem {
    pub domain: Arc<dyn Domain>,
    pub material: MaterialParams,
    pub toughness: ToughnessField,
    pub degradation: DegradationKind,
    pub fcm: FcmSettings,
    pub bcs: BoundaryConditions,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        if !(self.fcm.alpha > 0.0 && self.fcm.alpha <= 1.0) {
            return Err(crate::Error::InvalidArgument(format!("α_FCM = {} must lie in (0, 1]", self.fcm.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaggeredConfig {
    /// Stop tolerance ε_stag on S_tol.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// β = penalty_factor · E / h with h the smallest edge of the leaf.
    pub penalty_factor: f64,
    pub linear_solver: LinearSolverKind,
    /// Leaves where |g − 1| stays below this everywhere reuse the
    /// undamaged element stiffness.
    pub degradation_skip_tolerance: f64,
    /// Cap on the lagged-slope fixed-point iterations of one phase-field
    /// solve (cubic degradation only).
    pub phase_iterations: usize,
    /// Stop when the largest change of a phase-field coefficient falls
    /// below this value without growing.
    pub phase_tolerance: f64,
}

impl Default for StaggeredConfig {
    fn default() -> Self {
        Self {
            tolerance: 5e-3,
            max_iterations: 35,
            penalty_factor: 1e6,
            linear_solver: LinearSolverKind::default(),
            degradation_skip_tolerance: 1e-10,
            phase_iterations: 50,
            phase_tolerance: 1e-6,
        }
    }
}

impl StaggeredConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0)
            || self.max_iterations == 0
            || !(self.penalty_factor > 0.0)
            || self.phase_iterations == 0
            || !(self.phase_tolerance > 0.0)
        {
            return Err(crate::Error::InvalidArgument(
                "staggered config needs ε_stag > 0, n_max ≥ 1 and β > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Unknowns of the coupled problem on one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    /// Interleaved displacement coefficients, `dof * dim + component`.
    pub displacement: Vec<f64>,
    pub phase: Vec<f64>,
    /// One value per quadrature point of the discretization.
    pub history: HistoryField,
    pub velocity: Option<Vec<f64>>,
    pub acceleration: Option<Vec<f64>>,
}

/// A mesh together with its FCM quadrature rules, face patches of the
/// boundary strips and sparsity patterns.
pub struct Discretization {
    mesh: MlhpMesh,
    rules: Vec<Vec<QuadPoint>>,
    offsets: Vec<usize>,
    faces: Vec<boundary::FacePatch>,
    scalar_pattern: Arc<SparsityPattern>,
    vector_pattern: Arc<SparsityPattern>,
    scalar_solver: OnceLock<SpdSolver>,
    vector_solver: OnceLock<SpdSolver>,
}

impl Discretization {
    pub fn new(mesh: MlhpMesh, problem: &Problem) -> Result<Self> {
        let dim = mesh.dim();
        let n = problem.fcm.points_per_axis.unwrap_or(mesh.order() + 1);
        let rules: Vec<Vec<QuadPoint>> = mesh
            .leaves()
            .par_iter()
            .map(|&leaf| {
                let bounds = mesh.cell(leaf).bounds;
                octree_rule(&bounds, problem.domain.as_ref(), problem.fcm.octree_depth, n, dim, problem.fcm.alpha)
                    .points
            })
            .collect();
        let mut offsets = Vec::with_capacity(rules.len() + 1);
        offsets.push(0);
        for r in &rules {
            offsets.push(offsets.last().unwrap() + r.len());
        }
        let faces = boundary::face_patches(&mesh, &problem.bcs)?;
        let groups = mesh.leaf_bases().iter().map(|b| b.dofs.as_slice());
        let scalar_pattern = Arc::new(SparsityPattern::from_groups(mesh.ndof(), groups.clone(), 1));
        let vector_pattern = Arc::new(SparsityPattern::from_groups(mesh.ndof(), groups, dim));
        Ok(Self {
            mesh,
            rules,
            offsets,
            faces,
            scalar_pattern,
            vector_pattern,
            scalar_solver: OnceLock::new(),
            vector_solver: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &MlhpMesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// Total number of quadrature points.
    pub fn npoints(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Quadrature points of the leaf at position `pos` in `mesh().leaves()`.
    pub fn leaf_points(&self, pos: usize) -> &[QuadPoint] {
        &self.rules[pos]
    }

    /// Global index of the first quadrature point of leaf `pos`.
    pub fn point_offset(&self, pos: usize) -> usize {
        self.offsets[pos]
    }

    /// All quadrature points in global order.
    pub fn points(&self) -> impl Iterator<Item = &QuadPoint> {
        self.rules.iter().flatten()
    }

    pub fn scalar_pattern(&self) -> &Arc<SparsityPattern> {
        &self.scalar_pattern
    }

    pub fn vector_pattern(&self) -> &Arc<SparsityPattern> {
        &self.vector_pattern
    }

    pub(crate) fn scalar_solver(&self, kind: LinearSolverKind) -> Result<&SpdSolver> {
        get_or_try_init(&self.scalar_solver, || SpdSolver::new(self.scalar_pattern.clone(), kind))
    }

    pub(crate) fn vector_solver(&self, kind: LinearSolverKind) -> Result<&SpdSolver> {
        get_or_try_init(&self.vector_solver, || SpdSolver::new(self.vector_pattern.clone(), kind))
    }

    /// Coefficients of the L² projection of `f` (evaluated at quadrature
    /// points, with the leaf position) onto the scalar space.
    pub fn project(&self, f: &(dyn Fn(usize, &Point) -> f64 + Sync)) -> Result<Vec<f64>> {
        let ones: Vec<f64> = self.points().map(|q| q.weight).collect();
        let zeros = vec![0.0; ones.len()];
        let mass = assembly::scalar_matrix(self, &ones, &zeros, None);
        let values: Vec<f64> = (0..self.rules.len())
            .flat_map(|pos| self.rules[pos].iter().map(move |q| f(pos, &q.x)))
            .zip(&ones)
            .map(|(v, w)| v * w)
            .collect();
        let rhs = assembly::scalar_load(self, &values);
        self.scalar_solver(LinearSolverKind::default())?.solve(&mass, &rhs)
    }

    /// Scalar field values at all quadrature points.
    pub fn scalar_at_points(&self, coeffs: &[f64]) -> Vec<f64> {
        assembly::scalar_at_points(self, coeffs)
    }
}

fn get_or_try_init<T>(cell: &OnceLock<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = init()?;
    Ok(cell.get_or_init(|| v))
}
