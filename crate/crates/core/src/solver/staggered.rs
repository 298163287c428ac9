//! The staggered elastic / phase-field iteration and quasi-static load
//! stepping.

use std::fmt::Write as _;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::assembly;
use super::boundary;
use super::transfer::transfer_state;
use super::{Discretization, FieldState, Problem, StaggeredConfig};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::CsrMatrix;
use crate::mesh::{CellId, MlhpMesh};
use crate::model::{self, DegradationKind, HistoryField};

/// Outcome of one staggered solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub iterations: usize,
    /// S_tol after every iteration.
    pub s_tol: Vec<f64>,
    /// E_i after every elastic solve.
    pub energies: Vec<f64>,
    pub converged: bool,
}

impl StepReport {
    pub fn last_s_tol(&self) -> f64 {
        self.s_tol.last().copied().unwrap_or(0.0)
    }
}

/// Mesh, state and cached operators of a running simulation.
pub struct Simulation {
    problem: Problem,
    config: StaggeredConfig,
    pub(crate) disc: Discretization,
    pub state: FieldState,
    load: f64,
    elastic_base: Option<CsrMatrix>,
    phase_base: Option<CsrMatrix>,
    pub(crate) mass: Option<CsrMatrix>,
}

impl Simulation {
    /// Zero displacement, intact phase field (s ≡ 1) and zero history.
    pub fn new(problem: Problem, mesh: MlhpMesh, config: StaggeredConfig) -> Result<Self> {
        problem.validate()?;
        config.validate()?;
        let disc = Discretization::new(mesh, &problem)?;
        let phase = disc.project(&|_, _| 1.0)?;
        let state = FieldState {
            displacement: vec![0.0; disc.mesh().ndof() * disc.dim()],
            phase,
            history: HistoryField::zeros(disc.npoints()),
            velocity: None,
            acceleration: None,
        };
        Ok(Self { problem, config, disc, state, load: 0.0, elastic_base: None, phase_base: None, mass: None })
    }

    /// Restores a simulation from a state that matches `mesh`.
    pub fn with_state(problem: Problem, mesh: MlhpMesh, config: StaggeredConfig, state: FieldState, load: f64) -> Result<Self> {
        problem.validate()?;
        config.validate()?;
        let disc = Discretization::new(mesh, &problem)?;
        let ndof = disc.mesh().ndof();
        if state.displacement.len() != ndof * disc.dim() || state.phase.len() != ndof || state.history.len() != disc.npoints() {
            return Err(Error::InvalidArgument("state does not match the mesh".into()));
        }
        Ok(Self { problem, config, disc, state, load, elastic_base: None, phase_base: None, mass: None })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &StaggeredConfig {
        &self.config
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn mesh(&self) -> &MlhpMesh {
        self.disc.mesh()
    }

    /// Current load parameter (applied displacement or load factor).
    pub fn load(&self) -> f64 {
        self.load
    }

    pub(crate) fn set_load(&mut self, load: f64) {
        self.load = load;
    }

    fn beta_scale(&self) -> f64 {
        self.config.penalty_factor * self.problem.material.youngs_modulus
    }

    /// Phase field at every quadrature point.
    pub fn phase_at_points(&self) -> Vec<f64> {
        self.disc.scalar_at_points(&self.state.phase)
    }

    /// Smallest phase-field value over the physical quadrature points.
    pub fn min_phase(&self) -> f64 {
        self.phase_at_points()
            .iter()
            .zip(self.disc.points())
            .filter(|(_, q)| q.alpha == 1.0)
            .map(|(s, _)| *s)
            .fold(f64::INFINITY, f64::min)
    }

    /// Elastic stiffness for the current phase field, penalty included.
    pub(crate) fn elastic_matrix(&mut self) -> CsrMatrix {
        let (lambda, mu) = self.problem.material.lame();
        if self.elastic_base.is_none() {
            let coef: Vec<f64> = self.disc.points().map(|q| q.weight * q.alpha).collect();
            let mut k = assembly::elastic_matrix(&self.disc, &coef, lambda, mu, None);
            k.add_matrix(&boundary::penalty_matrix(&self.disc, &self.problem.bcs, self.beta_scale()), 1.0);
            self.elastic_base = Some(k);
        }
        let s = self.phase_at_points();
        let tol = self.config.degradation_skip_tolerance;
        let mut coef = Vec::with_capacity(s.len());
        let mut active = vec![false; self.mesh().leaves().len()];
        for pos in 0..active.len() {
            let range = self.disc.point_offset(pos)..self.disc.point_offset(pos + 1);
            for (q, &sq) in self.disc.leaf_points(pos).iter().zip(&s[range]) {
                let (g, _) = model::degradation_unchecked(sq.clamp(0.0, 1.0), self.problem.degradation, &self.problem.material);
                if (g - 1.0).abs() > tol {
                    active[pos] = true;
                }
                coef.push(q.weight * q.alpha * (g - 1.0));
            }
        }
        let mut k = self.elastic_base.clone().unwrap();
        if active.iter().any(|&a| a) {
            k.add_matrix(&assembly::elastic_matrix(&self.disc, &coef, lambda, mu, Some(&active)), 1.0);
        }
        k
    }

    /// Assembled elastic system matrix for the current phase field.
    pub fn stiffness_matrix(&mut self) -> CsrMatrix {
        self.elastic_matrix()
    }

    pub(crate) fn elastic_rhs(&self, load: f64) -> Vec<f64> {
        boundary::boundary_rhs(&self.disc, &self.problem.bcs, self.beta_scale(), load)
    }

    /// Consistent mass matrix ρ ∫ α N N per component.
    pub(crate) fn mass_matrix(&mut self) -> &CsrMatrix {
        if self.mass.is_none() {
            let rho = self.problem.material.density;
            let dim = self.disc.dim();
            let coef: Vec<f64> = self.disc.points().map(|q| rho * q.weight * q.alpha).collect();
            let m = assembly::assemble(&self.disc, true, |pos| {
                let basis = &self.disc.mesh().leaf_bases()[pos];
                if basis.is_empty() {
                    return None;
                }
                let n = basis.len();
                let range = self.disc.point_offset(pos)..self.disc.point_offset(pos + 1);
                let tab = assembly::tabulate_leaf(&self.disc, pos);
                let zeros = vec![0.0; range.len()];
                let me = assembly::scalar_element(&tab, &coef[range], &zeros, dim);
                let mut ke = nalgebra::DMatrix::zeros(n * dim, n * dim);
                for c in 0..dim {
                    ke.view_mut((c * n, c * n), (n, n)).copy_from(&me);
                }
                Some((assembly::vector_dofs(&basis.dofs, dim), ke))
            });
            self.mass = Some(m);
        }
        self.mass.as_ref().unwrap()
    }

    /// Solves the elastic problem at load parameter `load` with the phase
    /// field frozen. Returns E = sqrt(uᵀKu / (2 n_dof)).
    pub fn solve_elastic(&mut self, load: f64) -> Result<f64> {
        let k = self.elastic_matrix();
        let f = self.elastic_rhs(load);
        let u = self.disc.vector_solver(self.config.linear_solver)?.solve(&k, &f)?;
        let energy = energy_measure(&k, &u);
        self.state.displacement = u;
        self.load = load;
        Ok(energy)
    }

    /// H = max(H_start, Ψ⁺(ε(u))) at physical points; fictitious points
    /// carry no history.
    pub fn update_history(&mut self, start: &[f64]) {
        let strains = assembly::strains_at_points(&self.disc, &self.state.displacement);
        let material = &self.problem.material;
        for (i, (eps, q)) in strains.iter().zip(self.disc.points()).enumerate() {
            self.state.history.values[i] = start[i];
            if q.alpha == 1.0 {
                let (plus, _) = model::spectral_split(eps, material);
                self.state.history.update(i, plus);
            }
        }
    }

    /// Phase-field operator for the current history, with the degradation
    /// slope lagged at the current phase field.
    pub(crate) fn phase_matrix(&mut self) -> CsrMatrix {
        let l = self.problem.material.length_scale;
        if self.phase_base.is_none() {
            let mass: Vec<f64> = self.disc.points().map(|q| q.weight * q.alpha).collect();
            let diffusion: Vec<f64> = mass.iter().map(|m| 4.0 * l * l * m).collect();
            let mut p = assembly::scalar_matrix(&self.disc, &mass, &diffusion, None);
            self.add_pins(&mut p);
            self.phase_base = Some(p);
        }
        let s = self.phase_at_points();
        let h = &self.state.history.values;
        let mut reaction = Vec::with_capacity(s.len());
        let mut active = vec![false; self.mesh().leaves().len()];
        for pos in 0..active.len() {
            let off = self.disc.point_offset(pos);
            for (k, q) in self.disc.leaf_points(pos).iter().enumerate() {
                let i = off + k;
                let mut r = 0.0;
                if h[i] > 0.0 {
                    let gc = self.problem.toughness.at(&q.x);
                    let slope = model::driving_slope(s[i], self.problem.degradation, &self.problem.material);
                    r = q.weight * q.alpha * 2.0 * l / gc * h[i] * slope;
                    active[pos] = true;
                }
                reaction.push(r);
            }
        }
        let mut p = self.phase_base.clone().unwrap();
        if active.iter().any(|&a| a) {
            let zeros = vec![0.0; reaction.len()];
            p.add_matrix(&assembly::scalar_matrix(&self.disc, &reaction, &zeros, Some(&active)), 1.0);
        }
        p
    }

    fn add_pins(&self, p: &mut CsrMatrix) {
        let pins = &self.problem.bcs.phase_pins;
        if pins.is_empty() {
            return;
        }
        let weight = 1e8 * p.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mesh = self.disc.mesh();
        for x in pins {
            let leaf = mesh.locate(x);
            let basis = mesh.leaf_basis(leaf);
            let tab = assembly::Tabulation::new(mesh, basis, std::iter::once(x));
            let n = tab.n;
            for a in 0..n {
                for b in 0..n {
                    p.add(basis.dofs[a], basis.dofs[b], weight * tab.values[a] * tab.values[b]);
                }
            }
        }
    }

    /// Solves the phase-field problem with the history frozen. For the cubic
    /// degradation the slope is re-lagged until the phase field settles.
    pub fn solve_phase(&mut self) -> Result<()> {
        let f: Vec<f64> = self.disc.points().map(|q| q.weight * q.alpha).collect();
        let rhs = assembly::scalar_load(&self.disc, &f);
        let passes = match self.problem.degradation {
            DegradationKind::Quadratic => 1,
            DegradationKind::Cubic => self.config.phase_iterations,
        };
        let mut previous = f64::INFINITY;
        for pass in 1..=passes {
            let p = self.phase_matrix();
            let next = self.disc.scalar_solver(self.config.linear_solver)?.solve(&p, &rhs)?;
            let change = next.iter().zip(&self.state.phase).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            self.state.phase = next;
            // a growing change means the lagged iterate is leaving an
            // unstable branch, however small it still is
            if change < self.config.phase_tolerance && change <= previous && pass > 1 {
                break;
            }
            previous = change;
            if pass == passes {
                debug!("phase-field lagging stopped at {passes} passes (change {change:e})");
            }
        }
        Ok(())
    }

    /// Alternates elastic solve, history update and phase-field solve at
    /// load parameter `load` until S_tol < ε_stag or the iteration cap.
    pub fn staggered_step(&mut self, load: f64) -> Result<StepReport> {
        let start = self.state.history.values.clone();
        let mut report = StepReport { iterations: 0, s_tol: Vec::new(), energies: Vec::new(), converged: false };
        for it in 1..=self.config.max_iterations {
            let e = self.solve_elastic(load)?;
            if !e.is_finite() {
                return Err(Error::NonFiniteEnergy { iteration: it });
            }
            self.update_history(&start);
            self.solve_phase()?;
            report.iterations = it;
            report.energies.push(e);
            let s_tol = s_tol(&report.energies);
            report.s_tol.push(s_tol);
            if let [.., prev, last] = report.energies[..] {
                if last > prev * (1.0 + 1e-12) {
                    debug!("staggered energy increased at iteration {it}: {prev:e} -> {last:e}");
                }
            }
            if s_tol.abs() < self.config.tolerance {
                report.converged = true;
                break;
            }
        }
        if !report.converged {
            warn!(
                "staggered iteration stopped at the cap of {} iterations (S_tol = {:e})",
                self.config.max_iterations,
                report.last_s_tol()
            );
        }
        Ok(report)
    }

    /// Force exerted by the loaded strips on the body.
    pub fn reaction_vector(&self) -> [f64; 3] {
        boundary::reaction_force(&self.disc, &self.problem.bcs, self.beta_scale(), &self.state.displacement, self.load)
    }

    /// Reaction force along the loading direction (positive when the strips
    /// push in the direction they move).
    pub fn reaction(&self) -> f64 {
        let f = self.reaction_vector();
        let d = boundary::load_direction(&self.problem.bcs);
        f[0] * d[0] + f[1] * d[1] + f[2] * d[2]
    }

    /// Internal-force route to the strip reaction: ∫ σ : ∇(χ e_c) dV for a
    /// cutoff χ equal to one on the loaded strips and zero on the supports.
    /// `cutoff` returns χ and ∇χ.
    pub fn domain_reaction(&self, cutoff: &(dyn Fn(&Point) -> (f64, Point) + Sync)) -> [f64; 3] {
        let dim = self.disc.dim();
        let material = &self.problem.material;
        let kind = self.problem.degradation;
        let u = &self.state.displacement;
        let s_coeffs = &self.state.phase;
        let parts = assembly::map_points(&self.disc, |pos, tab, dofs| {
            let mut f = [0.0; 3];
            for (q, qp) in self.disc.leaf_points(pos).iter().enumerate() {
                let (_, grad_chi) = cutoff(&qp.x);
                if grad_chi.iter().all(|&g| g == 0.0) {
                    continue;
                }
                let s = tab.value(q, s_coeffs, dofs).clamp(0.0, 1.0);
                let (g, _) = model::degradation_unchecked(s, kind, material);
                let eps = model::strain(&tab.displacement_gradient(q, u, dofs, dim));
                let sigma = model::hybrid_stress(&eps, g, material);
                for c in 0..dim {
                    for j in 0..dim {
                        f[c] += qp.weight * qp.alpha * sigma[(c, j)] * grad_chi[j];
                    }
                }
            }
            vec![f]
        });
        parts.iter().fold([0.0; 3], |acc, f| [acc[0] + f[0], acc[1] + f[1], acc[2] + f[2]])
    }

    /// Refines leaves where the physical phase field drops to `threshold`
    /// or below and transfers the state. Returns the number of leaves split.
    pub fn refine(&mut self, threshold: f64) -> Result<usize> {
        let mesh = self.disc.mesh();
        let domain = self.problem.domain.clone();
        let coeffs = &self.state.phase;
        let indicator = |leaf: CellId, x: &Point| {
            if domain.is_physical(x) {
                mesh.evaluate_on_leaf(leaf, coeffs, x).0
            } else {
                1.0
            }
        };
        let (next, marked) = mesh.dynamic_refine(&indicator, threshold);
        if marked.is_empty() {
            return Ok(0);
        }
        let disc = Discretization::new(next, &self.problem)?;
        self.state = transfer_state(&self.state, &self.disc, &disc)?;
        self.disc = disc;
        self.elastic_base = None;
        self.phase_base = None;
        self.mass = None;
        info!("refined {} leaves; {} scalar dofs", marked.len(), self.disc.mesh().ndof());
        Ok(marked.len())
    }
}

/// sqrt(uᵀ K u / (2 n)).
pub(crate) fn energy_measure(k: &CsrMatrix, u: &[f64]) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    (k.quad_form(u) / (2.0 * u.len() as f64)).max(0.0).sqrt()
}

/// S_tol for the energy history of the current step. The first iteration
/// reports 1 (continue) unless the energy vanishes; a vanishing change of
/// energy counts as converged.
fn s_tol(energies: &[f64]) -> f64 {
    let last = *energies.last().unwrap();
    let init = energies[0];
    let scale = last.abs().max(init.abs());
    if scale == 0.0 {
        return 0.0;
    }
    if energies.len() == 1 {
        return 1.0;
    }
    let prev = energies[energies.len() - 2];
    let num = prev - last;
    let den = init - last;
    if num.abs() <= 1e-12 * scale {
        return 0.0;
    }
    if den.abs() <= 1e-14 * scale {
        return 1.0;
    }
    num / den
}

/// Displacement stepping for the quasi-static run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    pub coarse_step: f64,
    pub fine_step: f64,
    /// Switch to fine steps once the applied displacement reaches this value.
    pub fine_from: Option<f64>,
    /// Switch to fine steps once the physical phase field drops below this.
    pub fine_trigger_phase: f64,
    pub max_displacement: f64,
    /// After a detected peak, stop when the force falls below this fraction
    /// of the peak.
    pub stop_drop_ratio: f64,
}

impl Default for LoadSchedule {
    fn default() -> Self {
        Self {
            coarse_step: 5e-3,
            fine_step: 5e-4,
            fine_from: None,
            fine_trigger_phase: 0.9,
            max_displacement: 0.2,
            stop_drop_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementSettings {
    /// Leaves whose sampled phase field is at or below this are refined.
    pub threshold: f64,
    /// Refinement passes per load step (each followed by a re-solve).
    pub max_passes: usize,
}

impl Default for RefinementSettings {
    fn default() -> Self {
        Self { threshold: 0.5, max_passes: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub displacement: f64,
    pub force: f64,
    pub iterations: usize,
    pub s_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadDisplacementCurve {
    pub points: Vec<CurvePoint>,
}

impl LoadDisplacementCurve {
    pub fn forces(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.force).collect()
    }

    pub fn displacements(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.displacement).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# vnotch load-displacement v1\nstep,displacement_mm,force_kN,staggered_iterations,s_tol\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{},{}", p.step, p.displacement, p.force, p.iterations, p.s_tol);
        }
        out
    }
}

/// True once the force sequence has a first local maximum.
pub fn failure_detected(forces: &[f64]) -> Option<(f64, usize)> {
    crate::postprocess::failure_load(forces).ok()
}

/// Applies displacement steps, runs the staggered solver, refines the mesh
/// and records the reaction force on the loaded strips after every step.
pub fn quasi_static_run(
    sim: &mut Simulation,
    schedule: &LoadSchedule,
    refinement: Option<&RefinementSettings>,
    observer: &mut dyn FnMut(&Simulation, &CurvePoint),
) -> Result<LoadDisplacementCurve> {
    if !(schedule.coarse_step > 0.0 && schedule.fine_step > 0.0 && schedule.max_displacement > 0.0) {
        return Err(Error::InvalidArgument("load steps and maximum displacement must be positive".into()));
    }
    let mut curve = LoadDisplacementCurve::default();
    let mut fine = false;
    let mut step = 0;
    let mut load = sim.load();
    while load < schedule.max_displacement - 1e-15 {
        step += 1;
        if schedule.fine_from.is_some_and(|d| load + 1e-15 >= d) {
            fine = true;
        }
        load += if fine { schedule.fine_step } else { schedule.coarse_step };
        let run = |sim: &mut Simulation| -> Result<StepReport> {
            let mut report = sim.staggered_step(load)?;
            if let Some(r) = refinement {
                for _ in 0..r.max_passes {
                    if sim.refine(r.threshold)? == 0 {
                        break;
                    }
                    report = sim.staggered_step(load)?;
                }
            }
            Ok(report)
        };
        let report = run(sim).map_err(|e| e.at_step(step))?;
        let point = CurvePoint {
            step,
            displacement: load,
            force: sim.reaction(),
            iterations: report.iterations,
            s_tol: report.last_s_tol(),
        };
        info!(
            "step {step}: u = {load:.5} mm, F = {:.5} kN, {} staggered iterations",
            point.force, point.iterations
        );
        curve.points.push(point);
        observer(sim, &point);
        if !fine && sim.min_phase() < schedule.fine_trigger_phase {
            fine = true;
        }
        if let Some((peak, _)) = failure_detected(&curve.forces()) {
            if point.force < schedule.stop_drop_ratio * peak {
                break;
            }
        }
    }
    Ok(curve)
}
