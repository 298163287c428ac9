//! Run configuration. Units are mm, kN and s; key names carry the unit.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vnotch::linalg::LinearSolverKind;
use vnotch::model::{DegradationKind, MaterialParams};
use vnotch::postprocess::{PartFilter, RigidTransform};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    QuasiStatic,
    Dynamic,
    MetricsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specimen {
    /// 3D V-notch four-point bending specimen.
    Vnotch,
    /// 2D plane-strain single-edge notched tension on the unit square.
    SentTension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub quasi_static: QuasiStaticConfig,
    #[serde(default)]
    pub dynamic: DynamicSection,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub specimen: Specimen,
    pub inclination_deg: f64,
    /// Slot width of the tension specimen.
    pub slot_width_mm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { specimen: Specimen::Vnotch, inclination_deg: 0.0, slot_width_mm: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub youngs_modulus_kn_per_mm2: f64,
    pub poisson_ratio: f64,
    pub fracture_toughness_kn_per_mm: f64,
    pub length_scale_mm: f64,
    pub eta: f64,
    pub phi: f64,
    pub density: f64,
    pub critical_stress_mpa: f64,
    /// `None` selects cubic for quasi-static and quadratic for dynamic runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degradation: Option<DegradationKind>,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let m = MaterialParams::default();
        Self {
            youngs_modulus_kn_per_mm2: m.youngs_modulus,
            poisson_ratio: m.poisson_ratio,
            fracture_toughness_kn_per_mm: m.fracture_toughness,
            length_scale_mm: m.length_scale,
            eta: m.eta,
            phi: m.phi,
            density: m.density,
            critical_stress_mpa: m.critical_stress,
            degradation: None,
        }
    }
}

impl MaterialConfig {
    pub fn params(&self) -> MaterialParams {
        MaterialParams {
            youngs_modulus: self.youngs_modulus_kn_per_mm2,
            poisson_ratio: self.poisson_ratio,
            fracture_toughness: self.fracture_toughness_kn_per_mm,
            length_scale: self.length_scale_mm,
            eta: self.eta,
            phi: self.phi,
            density: self.density,
            critical_stress: self.critical_stress_mpa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub base_elements: [usize; 3],
    pub order: usize,
    /// Maximum refinement depth k.
    pub max_depth: u8,
    /// Depth of the initial refinement around the notch tip (or the
    /// expected crack band of the tension specimen).
    pub initial_depth: u8,
    /// Half-width of the initially refined zone normal to the crack plane.
    pub refinement_halfwidth_mm: f64,
    /// Height range of the initially refined zone around the notch.
    pub refinement_height_mm: [f64; 2],
    /// Leaves where the phase field drops to this value are refined.
    pub refine_threshold: f64,
    pub refinement_passes: usize,
    pub fcm_alpha: f64,
    pub octree_depth: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            base_elements: [20, 5, 2],
            order: 2,
            max_depth: 3,
            initial_depth: 3,
            refinement_halfwidth_mm: 1.0,
            refinement_height_mm: [5.0, 8.0],
            refine_threshold: 0.5,
            refinement_passes: 1,
            fcm_alpha: 1e-4,
            octree_depth: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub staggered_tolerance: f64,
    pub max_staggered_iterations: usize,
    pub penalty_factor: f64,
    pub linear_solver: LinearSolverKind,
    pub phase_iterations: usize,
    pub phase_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = vnotch::solver::StaggeredConfig::default();
        Self {
            staggered_tolerance: s.tolerance,
            max_staggered_iterations: s.max_iterations,
            penalty_factor: s.penalty_factor,
            linear_solver: s.linear_solver,
            phase_iterations: s.phase_iterations,
            phase_tolerance: s.phase_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasiStaticConfig {
    pub coarse_step_mm: f64,
    pub fine_step_mm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine_from_mm: Option<f64>,
    pub fine_trigger_phase: f64,
    pub max_displacement_mm: f64,
    pub stop_drop_ratio: f64,
}

impl Default for QuasiStaticConfig {
    fn default() -> Self {
        let s = vnotch::solver::LoadSchedule::default();
        Self {
            coarse_step_mm: s.coarse_step,
            fine_step_mm: s.fine_step,
            fine_from_mm: s.fine_from,
            fine_trigger_phase: s.fine_trigger_phase,
            max_displacement_mm: s.max_displacement,
            stop_drop_ratio: s.stop_drop_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSegmentConfig {
    pub dt_s: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicSection {
    /// Compressive traction on the top strips (2 Pa = 2e-9 kN/mm²).
    pub pressure_kn_per_mm2: f64,
    pub segments: Vec<TimeSegmentConfig>,
    pub full_staggering: bool,
    pub blowup_factor: f64,
}

impl Default for DynamicSection {
    fn default() -> Self {
        Self {
            pressure_kn_per_mm2: 2e-9,
            segments: vec![TimeSegmentConfig { dt_s: 1e-4, steps: 10 }, TimeSegmentConfig { dt_s: 2e-5, steps: 10 }],
            full_staggering: false,
            blowup_factor: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub curve_csv: PathBuf,
    pub mesh_stats_csv: PathBuf,
    pub surface_stl: PathBuf,
    pub summary_json: PathBuf,
    pub angles_csv: PathBuf,
    pub distances_csv: PathBuf,
    pub energy_csv: PathBuf,
    /// Iso-level of the exported crack surface.
    pub surface_level: f64,
    /// Sampling intervals per leaf and axis for the crack surface.
    pub surface_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            curve_csv: "load_displacement.csv".into(),
            mesh_stats_csv: "mesh_stats.csv".into(),
            surface_stl: "crack_surface.stl".into(),
            summary_json: "summary.json".into(),
            angles_csv: "initiation_angles.csv".into(),
            distances_csv: "surface_distances.csv".into(),
            energy_csv: "energies.csv".into(),
            surface_level: vnotch::postprocess::CRACK_LEVEL,
            surface_samples: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Crack surface (STL); in simulation modes the computed surface is
    /// used when this is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_stl: Option<PathBuf>,
    pub cloud_ply: PathBuf,
    /// Applied to the cloud before comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_transform: Option<RigidTransform>,
    /// Applied to both surface and cloud.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_filter: Option<PartFilter>,
    /// Defaults to the apex length of the notch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notch_length_mm: Option<f64>,
    #[serde(default = "yes")]
    pub angles: bool,
}

fn yes() -> bool {
    true
}

fn invalid(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config { path: path.to_string(), message: message.to_string() }
}

pub const BUNDLED: [(&str, &str); 2] = [
    ("vnotch_0deg_coarse", include_str!("../configs/vnotch_0deg_coarse.toml")),
    ("senttension_2d", include_str!("../configs/senttension_2d.toml")),
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| invalid("<toml>", e.message()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| invalid("<toml>", e))
    }

    pub fn bundled(name: &str) -> Result<Self, CliError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| invalid("name", format!("no bundled config '{name}'")))?;
        Self::from_toml(text)
    }

    /// Degradation for the configured mode.
    pub fn degradation(&self) -> DegradationKind {
        self.material.degradation.unwrap_or(match self.mode {
            Mode::Dynamic => DegradationKind::Quadratic,
            _ => DegradationKind::Cubic,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.geometry;
        if g.specimen == Specimen::Vnotch && !(g.inclination_deg.abs() < 60.0) {
            return Err(invalid("geometry.inclination_deg", "must lie in (-60, 60)"));
        }
        if g.specimen == Specimen::SentTension && !(g.slot_width_mm > 0.0 && g.slot_width_mm < 0.5) {
            return Err(invalid("geometry.slot_width_mm", "must lie in (0, 0.5)"));
        }
        self.material.params().validate().map_err(|e| invalid("material", e))?;
        let m = &self.mesh;
        if m.base_elements.iter().any(|&n| n == 0) {
            return Err(invalid("mesh.base_elements", "must be positive"));
        }
        if !(1..=8).contains(&m.order) {
            return Err(invalid("mesh.order", "must lie in 1..=8"));
        }
        if m.initial_depth > m.max_depth {
            return Err(invalid("mesh.initial_depth", "exceeds mesh.max_depth"));
        }
        if !(m.refine_threshold > 0.0 && m.refine_threshold < 1.0) {
            return Err(invalid("mesh.refine_threshold", "must lie in (0, 1)"));
        }
        if !(m.fcm_alpha > 0.0 && m.fcm_alpha <= 1.0) {
            return Err(invalid("mesh.fcm_alpha", "must lie in (0, 1]"));
        }
        if !(m.refinement_halfwidth_mm >= 0.0) || m.refinement_height_mm[0] > m.refinement_height_mm[1] {
            return Err(invalid("mesh.refinement_height_mm", "needs a non-negative half-width and an ordered range"));
        }
        let s = &self.solver;
        if !(s.staggered_tolerance > 0.0) {
            return Err(invalid("solver.staggered_tolerance", "must be positive"));
        }
        if s.max_staggered_iterations == 0 || s.phase_iterations == 0 {
            return Err(invalid("solver.max_staggered_iterations", "iteration caps must be positive"));
        }
        if !(s.penalty_factor > 0.0) {
            return Err(invalid("solver.penalty_factor", "must be positive"));
        }
        let q = &self.quasi_static;
        if !(q.coarse_step_mm > 0.0 && q.fine_step_mm > 0.0) {
            return Err(invalid("quasi_static.coarse_step_mm", "displacement steps must be positive"));
        }
        if !(q.max_displacement_mm > 0.0) {
            return Err(invalid("quasi_static.max_displacement_mm", "must be positive"));
        }
        let d = &self.dynamic;
        if d.segments.iter().any(|s| !(s.dt_s > 0.0)) {
            return Err(invalid("dynamic.segments", "time steps must be positive"));
        }
        if !(d.pressure_kn_per_mm2 >= 0.0) {
            return Err(invalid("dynamic.pressure_kn_per_mm2", "must be non-negative"));
        }
        if self.mode == Mode::Dynamic && g.specimen != Specimen::Vnotch {
            return Err(invalid("mode", "dynamic runs use the V-notch specimen"));
        }
        let o = &self.output;
        if !(o.surface_level > 0.0 && o.surface_level < 1.0) {
            return Err(invalid("output.surface_level", "must lie in (0, 1)"));
        }
        if o.surface_samples == 0 {
            return Err(invalid("output.surface_samples", "must be positive"));
        }
        match (&self.metrics, self.mode) {
            (None, Mode::MetricsOnly) => return Err(invalid("metrics", "required in metrics_only mode")),
            (Some(mc), Mode::MetricsOnly) if mc.surface_stl.is_none() => {
                return Err(invalid("metrics.surface_stl", "required in metrics_only mode"))
            }
            _ => {}
        }
        if let Some(mc) = &self.metrics {
            if let Some(t) = &mc.cloud_transform {
                t.validate().map_err(|e| invalid("metrics.cloud_transform", e))?;
            }
            if mc.notch_length_mm.is_some_and(|l| !(l > 0.0)) {
                return Err(invalid("metrics.notch_length_mm", "must be positive"));
            }
        }
        Ok(())
    }

    /// Checks that referenced input files exist, resolving relative paths
    /// against `base`.
    pub fn check_inputs(&self, base: &std::path::Path) -> Result<(), CliError> {
        if let Some(mc) = &self.metrics {
            for (field, path) in [("metrics.surface_stl", mc.surface_stl.as_ref()), ("metrics.cloud_ply", Some(&mc.cloud_ply))] {
                if let Some(p) = path {
                    if !base.join(p).is_file() {
                        return Err(invalid(field, format!("file {} not found", base.join(p).display())));
                    }
                }
            }
        }
        Ok(())
    }
}
