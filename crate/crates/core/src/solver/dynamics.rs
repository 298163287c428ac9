//! Implicit Newmark time integration (average acceleration) of the hybrid
//! elastodynamic problem with a staggered phase-field update per step.

use log::info;
use serde::{Deserialize, Serialize};

use super::staggered::{energy_measure, RefinementSettings, Simulation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSegment {
    /// Time step Δt [s].
    pub dt: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicConfig {
    pub segments: Vec<TimeSegment>,
    /// Constant load parameter applied to tractions and loaded strips.
    pub load_factor: f64,
    /// Iterate elastic and phase-field solves to staggered convergence in
    /// every step instead of a single phase-field solve.
    pub full_staggering: bool,
    /// Evolve history and phase field; `false` integrates the undamaged
    /// elastodynamic problem.
    pub fracture: bool,
    /// Abort when the total energy exceeds this multiple of the larger of
    /// the initial energy and the external work done so far.
    pub blowup_factor: f64,
    pub refinement: Option<RefinementSettings>,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self {
            segments: vec![TimeSegment { dt: 1e-4, steps: 10 }, TimeSegment { dt: 2e-5, steps: 10 }],
            load_factor: 1.0,
            full_staggering: false,
            fracture: true,
            blowup_factor: 1e3,
            refinement: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicFrame {
    pub step: usize,
    pub time: f64,
    pub kinetic_energy: f64,
    pub strain_energy: f64,
    pub external_work: f64,
    pub min_phase: f64,
}

impl DynamicFrame {
    pub fn total_energy(&self) -> f64 {
        self.kinetic_energy + self.strain_energy
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub frames: Vec<DynamicFrame>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integrates the trajectory from the simulation's current state. The
/// observer sees the simulation after every step.
pub fn dynamic_run(
    sim: &mut Simulation,
    config: &DynamicConfig,
    observer: &mut dyn FnMut(&Simulation, &DynamicFrame),
) -> Result<Trajectory> {
    if config.segments.iter().any(|s| !(s.dt > 0.0)) {
        return Err(Error::InvalidArgument("time steps must be positive".into()));
    }
    let load = config.load_factor;
    let ndof = sim.state.displacement.len();
    if sim.state.velocity.is_none() {
        sim.state.velocity = Some(vec![0.0; ndof]);
    }
    let kind = sim.config().linear_solver;
    let stiffness = sim.elastic_matrix();
    let force = sim.elastic_rhs(load);
    if sim.state.acceleration.is_none() {
        // M a0 = f − K u0
        let ku = stiffness.mul_vec(&sim.state.displacement);
        let r: Vec<f64> = force.iter().zip(&ku).map(|(f, k)| f - k).collect();
        let m = sim.mass_matrix().clone();
        let a0 = if r.iter().all(|&v| v == 0.0) { vec![0.0; ndof] } else { sim.disc.vector_solver(kind)?.solve(&m, &r)? };
        sim.state.acceleration = Some(a0);
    }
    let energy = |sim: &mut Simulation, k: &crate::linalg::CsrMatrix| {
        let v = sim.state.velocity.clone().unwrap();
        let kinetic = 0.5 * sim.mass_matrix().quad_form(&v);
        let strain = 0.5 * k.quad_form(&sim.state.displacement);
        (kinetic, strain)
    };
    let (k0, s0) = energy(sim, &stiffness);
    let initial = k0 + s0;
    let mut trajectory = Trajectory::default();
    let mut time = 0.0;
    let mut work = 0.0;
    let mut step = 0;
    let mut f_prev = force;
    for segment in &config.segments {
        let dt = segment.dt;
        let a0 = 4.0 / (dt * dt);
        let a1 = 4.0 / dt;
        for _ in 0..segment.steps {
            step += 1;
            let result = (|| -> Result<DynamicFrame> {
                let start = sim.state.history.values.clone();
                let mut k;
                let iterations = if config.full_staggering { sim.config().max_iterations } else { 1 };
                let u_n = sim.state.displacement.clone();
                let v_n = sim.state.velocity.clone().unwrap();
                let acc_n = sim.state.acceleration.clone().unwrap();
                let f = sim.elastic_rhs(load);
                let mut energies = Vec::new();
                loop {
                    k = sim.elastic_matrix();
                    let m = sim.mass_matrix().clone();
                    let mut eff = k.clone();
                    eff.add_matrix(&m, a0);
                    let hist: Vec<f64> = (0..ndof).map(|i| a0 * u_n[i] + a1 * v_n[i] + acc_n[i]).collect();
                    let mh = m.mul_vec(&hist);
                    let rhs: Vec<f64> = f.iter().zip(&mh).map(|(a, b)| a + b).collect();
                    let u = sim.disc.vector_solver(kind)?.solve(&eff, &rhs)?;
                    sim.state.displacement = u;
                    sim.set_load(load);
                    if !config.fracture {
                        break;
                    }
                    sim.update_history(&start);
                    sim.solve_phase()?;
                    energies.push(energy_measure(&k, &sim.state.displacement));
                    let n = energies.len();
                    let converged = n >= 2 && {
                        let (e0, e1, e2) = (energies[0], energies[n - 2], energies[n - 1]);
                        let den = e0 - e2;
                        (e1 - e2).abs() <= sim.config().tolerance * den.abs().max(1e-300)
                            || (e1 - e2).abs() <= 1e-12 * e2.abs()
                    };
                    if n >= iterations || converged {
                        break;
                    }
                }
                let u = &sim.state.displacement;
                let acc: Vec<f64> = (0..ndof).map(|i| a0 * (u[i] - u_n[i]) - a1 * v_n[i] - acc_n[i]).collect();
                let vel: Vec<f64> = (0..ndof).map(|i| v_n[i] + 0.5 * dt * (acc_n[i] + acc[i])).collect();
                let du: Vec<f64> = (0..ndof).map(|i| u[i] - u_n[i]).collect();
                work += 0.5 * (dot(&f, &du) + dot(&f_prev, &du));
                f_prev = f;
                sim.state.velocity = Some(vel);
                sim.state.acceleration = Some(acc);
                let (kinetic, strain) = energy(sim, &k);
                Ok(DynamicFrame {
                    step,
                    time: time + dt,
                    kinetic_energy: kinetic,
                    strain_energy: strain,
                    external_work: work,
                    min_phase: sim.min_phase(),
                })
            })();
            let frame = result.map_err(|e| e.at_step(step))?;
            time = frame.time;
            let total = frame.total_energy();
            let limit = config.blowup_factor * initial.max(work.abs()).max(1e-300);
            if !total.is_finite() || total > limit {
                return Err(Error::Unstable { step, energy: total, limit });
            }
            if step % 100 == 0 {
                info!("t = {time:.6} s, E = {total:e}, min s = {:.4}", frame.min_phase);
            }
            trajectory.frames.push(frame);
            observer(sim, &frame);
            if let Some(r) = config.refinement.as_ref().filter(|_| config.fracture) {
                if sim.refine(r.threshold)? > 0 {
                    f_prev = sim.elastic_rhs(load);
                }
            }
        }
    }
    Ok(trajectory)
}
