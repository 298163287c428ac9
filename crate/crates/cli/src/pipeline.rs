//! Builds the problem from a [`RunConfig`], runs it and writes the
//! artifacts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use vnotch::geometry::{build_vnotch, Aabb, SpecimenGeometry};
use vnotch::io::{read_ply, read_stl, write_angle_profile_csv, write_distances_csv, write_stl};
use vnotch::mesh::MlhpMesh;
use vnotch::postprocess::{
    directed_hausdorff, directed_modified_hausdorff, extract_isosurface, failure_load, hausdorff, initiation_angles,
    modified_hausdorff, surface_to_cloud_distances, AngleWindow, CrackSurface, PointSet,
};
use vnotch::setup::{dynamic_bcs, quasi_static_bcs, sent_problem, specimen_problem};
use vnotch::solver::dynamics::TimeSegment;
use vnotch::solver::{
    dynamic_run, quasi_static_run, DynamicConfig, FcmSettings, LoadSchedule, Problem, RefinementSettings,
    Simulation, StaggeredConfig,
};

use crate::config::{Mode, RunConfig, Specimen};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub leaves: usize,
    pub scalar_dofs: usize,
    pub max_level: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub surface_vertices: usize,
    pub cloud_points: usize,
    pub directed_hd: f64,
    pub directed_hd_reverse: f64,
    pub directed_mhd: f64,
    pub directed_mhd_reverse: f64,
    pub hd: f64,
    pub mhd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_at_front_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_load_kn: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_displacement_mm: Option<f64>,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_phase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSummary>,
    pub surface_triangles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSummary>,
    pub artifacts: Vec<PathBuf>,
}

/// Notch-tip zone refined up front: within `halfwidth` of the bisector
/// plane and inside the height range.
fn notch_zone(geom: &SpecimenGeometry, halfwidth: f64, heights: [f64; 2]) -> impl Fn(&Aabb) -> bool + '_ {
    move |b: &Aabb| {
        let d: Vec<f64> = (0..8).map(|k| geom.bisector_offset(&b.corner(k))).collect();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lo < halfwidth && hi > -halfwidth && b.min[1] < heights[1] && b.max[1] > heights[0]
    }
}

pub struct Setup {
    pub problem: Problem,
    pub mesh: MlhpMesh,
    pub geometry: Option<SpecimenGeometry>,
}

/// Problem and initial mesh of a simulation run.
pub fn build_setup(config: &RunConfig) -> Result<Setup, CliError> {
    let m = &config.mesh;
    let material = config.material.params();
    let fcm = FcmSettings { alpha: m.fcm_alpha, octree_depth: m.octree_depth, points_per_axis: None };
    match config.geometry.specimen {
        Specimen::Vnotch => {
            let geom = build_vnotch(config.geometry.inclination_deg)?;
            let bcs = match config.mode {
                Mode::Dynamic => dynamic_bcs(&geom, config.dynamic.pressure_kn_per_mm2),
                _ => quasi_static_bcs(&geom),
            };
            let problem = specimen_problem(&geom, material, config.degradation(), fcm, bcs);
            let mut mesh = MlhpMesh::create_base_grid(geom.bounding_box(), m.base_elements, m.order, 3)?
                .with_max_depth(m.max_depth);
            mesh.refine_region(&notch_zone(&geom, m.refinement_halfwidth_mm, m.refinement_height_mm), m.initial_depth);
            Ok(Setup { problem, mesh, geometry: Some(geom) })
        }
        Specimen::SentTension => {
            let mut problem = sent_problem(material, config.geometry.slot_width_mm, fcm);
            problem.degradation = config.material.degradation.unwrap_or(problem.degradation);
            let [nx, ny, _] = m.base_elements;
            let mut mesh =
                MlhpMesh::create_base_grid(Aabb::new([0.0; 3], [1.0, 1.0, 0.0]), [nx, ny, 1], m.order, 2)?
                    .with_max_depth(m.max_depth);
            let w = m.refinement_halfwidth_mm;
            mesh.refine_region(&|b: &Aabb| b.min[1] < 0.5 + w && b.max[1] > 0.5 - w, m.initial_depth);
            Ok(Setup { problem, mesh, geometry: None })
        }
    }
}

pub fn staggered_config(config: &RunConfig) -> StaggeredConfig {
    let s = &config.solver;
    StaggeredConfig {
        tolerance: s.staggered_tolerance,
        max_iterations: s.max_staggered_iterations,
        penalty_factor: s.penalty_factor,
        linear_solver: s.linear_solver,
        phase_iterations: s.phase_iterations,
        phase_tolerance: s.phase_tolerance,
        ..StaggeredConfig::default()
    }
}

/// Dynamic refinement settings, or `None` when no passes are configured.
pub fn refinement(config: &RunConfig) -> Option<RefinementSettings> {
    let m = &config.mesh;
    (m.refinement_passes > 0).then_some(RefinementSettings { threshold: m.refine_threshold, max_passes: m.refinement_passes })
}

fn create(dir: &Path, name: &Path, artifacts: &mut Vec<PathBuf>) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    artifacts.push(name.to_path_buf());
    Ok(BufWriter::new(File::create(path)?))
}

fn mesh_summary(mesh: &MlhpMesh) -> MeshSummary {
    MeshSummary {
        leaves: mesh.leaves().len(),
        scalar_dofs: mesh.ndof(),
        max_level: mesh.leaves().iter().map(|&l| mesh.cell(l).level).max().unwrap_or(0),
    }
}

/// Runs the configured pipeline, writing artifacts below `out_dir`.
/// Relative input paths are resolved against `input_dir`.
pub fn run(config: &RunConfig, input_dir: &Path, out_dir: &Path) -> Result<Summary, CliError> {
    config.validate()?;
    config.check_inputs(input_dir)?;
    std::fs::create_dir_all(out_dir)?;
    let out = &config.output;
    let mut summary = Summary { name: config.name.clone(), ..Default::default() };
    let mut surface: Option<CrackSurface> = None;
    let mut geometry = None;

    match config.mode {
        Mode::QuasiStatic | Mode::Dynamic => {
            let setup = build_setup(config)?;
            geometry = setup.geometry.clone();
            let domain = setup.problem.domain.clone();
            let mut sim = Simulation::new(setup.problem, setup.mesh, staggered_config(config))?;
            info!("{}: {} leaves, {} scalar dofs", config.name, sim.mesh().leaves().len(), sim.mesh().ndof());
            let steps;
            if config.mode == Mode::QuasiStatic {
                let q = &config.quasi_static;
                let schedule = LoadSchedule {
                    coarse_step: q.coarse_step_mm,
                    fine_step: q.fine_step_mm,
                    fine_from: q.fine_from_mm,
                    fine_trigger_phase: q.fine_trigger_phase,
                    max_displacement: q.max_displacement_mm,
                    stop_drop_ratio: q.stop_drop_ratio,
                };
                let curve = quasi_static_run(&mut sim, &schedule, refinement(config).as_ref(), &mut |_, _| {})?;
                create(out_dir, &out.curve_csv, &mut summary.artifacts)?.write_all(curve.to_csv().as_bytes())?;
                if let Ok((force, idx)) = failure_load(&curve.forces()) {
                    summary.failure_load_kn = Some(force);
                    summary.peak_step = Some(curve.points[idx].step);
                    summary.peak_displacement_mm = Some(curve.points[idx].displacement);
                }
                steps = curve.points.len();
            } else {
                let d = &config.dynamic;
                let dynamic = DynamicConfig {
                    segments: d.segments.iter().map(|s| TimeSegment { dt: s.dt_s, steps: s.steps }).collect(),
                    load_factor: 1.0,
                    full_staggering: d.full_staggering,
                    fracture: true,
                    blowup_factor: d.blowup_factor,
                    refinement: refinement(config),
                };
                let trajectory = dynamic_run(&mut sim, &dynamic, &mut |_, _| {})?;
                let mut w = create(out_dir, &out.energy_csv, &mut summary.artifacts)?;
                writeln!(w, "# vnotch energies v1\nstep,time_s,kinetic,strain,external_work,min_phase")?;
                for f in &trajectory.frames {
                    writeln!(
                        w,
                        "{},{:?},{:?},{:?},{:?},{:?}",
                        f.step, f.time, f.kinetic_energy, f.strain_energy, f.external_work, f.min_phase
                    )?;
                }
                steps = trajectory.frames.len();
            }
            summary.steps = steps;
            summary.min_phase = Some(sim.min_phase());
            summary.mesh = Some(mesh_summary(sim.mesh()));
            create(out_dir, &out.mesh_stats_csv, &mut summary.artifacts)?.write_all(sim.mesh().stats_csv().as_bytes())?;
            if sim.mesh().dim() == 3 {
                let s = extract_isosurface(
                    sim.mesh(),
                    &sim.state.phase,
                    domain.as_ref(),
                    out.surface_level,
                    out.surface_samples,
                    steps,
                )?;
                write_stl(create(out_dir, &out.surface_stl, &mut summary.artifacts)?, &s)?;
                summary.surface_triangles = s.len();
                surface = Some(s);
            }
        }
        Mode::MetricsOnly => {
            if config.geometry.specimen == Specimen::Vnotch {
                geometry = Some(build_vnotch(config.geometry.inclination_deg)?);
            }
        }
    }

    if let Some(mc) = &config.metrics {
        let surface = match &mc.surface_stl {
            Some(p) => read_stl(BufReader::new(File::open(input_dir.join(p))?))?,
            None => surface.unwrap_or_default(),
        };
        let mut cloud = read_ply(BufReader::new(File::open(input_dir.join(&mc.cloud_ply))?))?;
        if let Some(t) = &mc.cloud_transform {
            cloud = t.apply_points(&cloud);
        }
        let (surface, cloud) = match &mc.part_filter {
            Some(f) => (f.apply_surface(&surface), f.apply_points(&cloud)),
            None => (surface, cloud),
        };
        let vertices = PointSet::from(&surface);
        let notch_length = mc.notch_length_mm.or(geometry.as_ref().map(|g| g.apex_length())).unwrap_or(1.0);
        let distances = surface_to_cloud_distances(&surface, &cloud, notch_length)?;
        write_distances_csv(create(out_dir, &out.distances_csv, &mut summary.artifacts)?, &distances)?;
        let mut metrics = MetricsSummary {
            surface_vertices: vertices.len(),
            cloud_points: cloud.len(),
            directed_hd: directed_hausdorff(&vertices, &cloud)?,
            directed_hd_reverse: directed_hausdorff(&cloud, &vertices)?,
            directed_mhd: directed_modified_hausdorff(&vertices, &cloud)?,
            directed_mhd_reverse: directed_modified_hausdorff(&cloud, &vertices)?,
            hd: hausdorff(&vertices, &cloud)?,
            mhd: modified_hausdorff(&vertices, &cloud)?,
            theta_at_front_deg: None,
        };
        if let (true, Some(g)) = (mc.angles, &geometry) {
            match initiation_angles(&surface, g, &AngleWindow::default()) {
                Ok(profile) => {
                    metrics.theta_at_front_deg = profile.samples.first().map(|s| s.theta_deg);
                    write_angle_profile_csv(create(out_dir, &out.angles_csv, &mut summary.artifacts)?, &profile)?;
                }
                Err(e) => log::warn!("initiation angles skipped: {e}"),
            }
        }
        summary.metrics = Some(metrics);
    }

    let mut w = create(out_dir, &out.summary_json, &mut summary.artifacts)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| CliError::Config { path: "<summary>".into(), message: e.to_string() })?;
    writeln!(w)?;
    Ok(summary)
}
