//! Benchmark configurations: the four-point bending setups of the V-notch
//! specimen and a 2D single-edge notched tension test.

use std::sync::Arc;

use crate::geometry::{Aabb, SlotDomain, SpecimenGeometry};
use crate::model::{DegradationKind, MaterialParams, ToughnessField};
use crate::solver::{BoundaryConditions, DirichletStrip, FcmSettings, Problem, TractionStrip};

/// Width of the loading and support strips [mm].
pub const STRIP_WIDTH: f64 = 0.25;
/// Fracture toughness window along x [mm] and the factor applied outside.
pub const TOUGHNESS_WINDOW: [f64; 2] = [35.0, 55.0];
pub const TOUGHNESS_OUTSIDE_FACTOR: f64 = 1e6;

fn strip_on_face(geom: &SpecimenGeometry, x0: f64, x1: f64, y: f64) -> Aabb {
    Aabb::new([x0, y, 0.0], [x1, y, geom.thickness])
}

/// G_c with the window where cracks may form.
pub fn specimen_toughness(base: f64) -> ToughnessField {
    ToughnessField { base, window: Some(TOUGHNESS_WINDOW), outside_factor: TOUGHNESS_OUTSIDE_FACTOR }
}

/// Quasi-static setup: prescribed downward displacement on the top strips
/// 19.75–20.0 and 60.0–60.25 mm; y and z fixed at the bottom supports near
/// x = 4 and x = 76 mm, x fixed only at x = 4 mm.
pub fn quasi_static_bcs(geom: &SpecimenGeometry) -> BoundaryConditions {
    let top = geom.height;
    let load = |x0, x1| DirichletStrip {
        face: strip_on_face(geom, x0, x1, top),
        normal_axis: 1,
        components: [None, Some(-1.0), None],
    };
    BoundaryConditions {
        dirichlet: vec![
            load(20.0 - STRIP_WIDTH, 20.0),
            load(60.0, 60.0 + STRIP_WIDTH),
            DirichletStrip {
                face: strip_on_face(geom, 4.0 - STRIP_WIDTH, 4.0, 0.0),
                normal_axis: 1,
                components: [Some(0.0), Some(0.0), Some(0.0)],
            },
            DirichletStrip {
                face: strip_on_face(geom, 76.0, 76.0 + STRIP_WIDTH, 0.0),
                normal_axis: 1,
                components: [None, Some(0.0), Some(0.0)],
            },
        ],
        tractions: Vec::new(),
        phase_pins: Vec::new(),
    }
}

/// Dynamic setup: y and z fixed on the bottom strips 3.75–4.0 and
/// 76.0–76.25 mm, compressive traction `pressure` [kN/mm²] on the top
/// strips.
pub fn dynamic_bcs(geom: &SpecimenGeometry, pressure: f64) -> BoundaryConditions {
    let support = |x0, x1| DirichletStrip {
        face: strip_on_face(geom, x0, x1, 0.0),
        normal_axis: 1,
        components: [None, Some(0.0), Some(0.0)],
    };
    let push = |x0, x1| TractionStrip {
        face: strip_on_face(geom, x0, x1, geom.height),
        normal_axis: 1,
        traction: [0.0, -pressure, 0.0],
    };
    BoundaryConditions {
        dirichlet: vec![support(4.0 - STRIP_WIDTH, 4.0), support(76.0, 76.0 + STRIP_WIDTH)],
        tractions: vec![push(20.0 - STRIP_WIDTH, 20.0), push(60.0, 60.0 + STRIP_WIDTH)],
        phase_pins: Vec::new(),
    }
}

pub fn specimen_problem(
    geom: &SpecimenGeometry,
    material: MaterialParams,
    degradation: DegradationKind,
    fcm: FcmSettings,
    bcs: BoundaryConditions,
) -> Problem {
    Problem {
        domain: Arc::new(geom.clone()),
        toughness: specimen_toughness(material.fracture_toughness),
        material,
        degradation,
        fcm,
        bcs,
    }
}

/// Single-edge notched tension in plane strain on the unit square [mm]:
/// a horizontal slot of width `slot_width` from the left edge to the
/// centre at mid-height, bottom edge clamped, top edge pulled upwards
/// with its horizontal motion suppressed.
pub fn sent_problem(material: MaterialParams, slot_width: f64, fcm: FcmSettings) -> Problem {
    let slot = Aabb::new([-1.0, 0.5 - 0.5 * slot_width, 0.0], [0.5, 0.5 + 0.5 * slot_width, 0.0]);
    let edge = |y| Aabb::new([0.0, y, 0.0], [1.0, y, 0.0]);
    let bcs = BoundaryConditions {
        dirichlet: vec![
            DirichletStrip { face: edge(0.0), normal_axis: 1, components: [Some(0.0), Some(0.0), None] },
            DirichletStrip { face: edge(1.0), normal_axis: 1, components: [Some(0.0), Some(1.0), None] },
        ],
        tractions: Vec::new(),
        phase_pins: Vec::new(),
    };
    Problem {
        domain: Arc::new(SlotDomain { slot, dim: 2 }),
        toughness: ToughnessField::uniform(material.fracture_toughness),
        material,
        degradation: DegradationKind::Quadratic,
        fcm,
        bcs,
    }
}

/// Material of the classic SENT benchmark (kN, mm).
pub fn sent_material(length_scale: f64) -> MaterialParams {
    MaterialParams {
        youngs_modulus: 210.0,
        poisson_ratio: 0.3,
        fracture_toughness: 2.7e-3,
        length_scale,
        ..MaterialParams::default()
    }
}
