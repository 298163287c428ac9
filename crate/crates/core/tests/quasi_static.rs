use vnotch::geometry::{build_vnotch, Aabb};
use vnotch::mesh::MlhpMesh;
use vnotch::model::{DegradationKind, MaterialParams};
use vnotch::setup::{quasi_static_bcs, sent_material, sent_problem, specimen_problem};
use vnotch::solver::{quasi_static_run, FcmSettings, LoadSchedule, Simulation, StaggeredConfig};

fn coarse_vnotch() -> Simulation {
    let geom = build_vnotch(0.0).unwrap();
    let fcm = FcmSettings { octree_depth: 2, ..FcmSettings::default() };
    let problem = specimen_problem(
        &geom,
        MaterialParams { length_scale: 0.25, ..Default::default() },
        DegradationKind::Cubic,
        fcm,
        quasi_static_bcs(&geom),
    );
    let mesh = MlhpMesh::create_base_grid(geom.bounding_box(), [20, 5, 2], 2, 3).unwrap();
    Simulation::new(problem, mesh, StaggeredConfig::default()).unwrap()
}

fn sent(nel: usize, depth: u8) -> Simulation {
    let problem = sent_problem(sent_material(0.03), 0.01, FcmSettings { octree_depth: 3, ..FcmSettings::default() });
    let mut mesh = MlhpMesh::create_base_grid(Aabb::new([0.0; 3], [1.0, 1.0, 0.0]), [nel, nel, 1], 2, 2).unwrap();
    mesh.refine_region(&|b: &Aabb| b.min[1] < 0.55 && b.max[1] > 0.45, depth);
    Simulation::new(problem, mesh, StaggeredConfig::default()).unwrap()
}

#[test]
fn pre_fracture_step_converges_within_five_iterations() {
    let mut sim = coarse_vnotch();
    let report = sim.staggered_step(5e-3).unwrap();
    assert!(report.converged && report.iterations <= 5, "{report:?}");
    assert!(report.last_s_tol() < 5e-3);

    let mut sim = sent(8, 2);
    let report = sim.staggered_step(1e-3).unwrap();
    assert!(report.converged && report.iterations <= 5, "{report:?}");
}

#[test]
fn elastic_range_is_linear() {
    let mut sim = coarse_vnotch();
    let schedule = LoadSchedule { max_displacement: 5.0 * 5e-3, ..LoadSchedule::default() };
    let curve = quasi_static_run(&mut sim, &schedule, None, &mut |_, _| {}).unwrap();
    assert_eq!(curve.points.len(), 5);
    let slopes: Vec<f64> = curve.points.iter().map(|p| p.force / p.displacement).collect();
    assert!(slopes[0] > 0.0);
    for s in &slopes {
        assert!((s / slopes[0] - 1.0).abs() < 0.01, "{slopes:?}");
    }
}

#[test]
fn penalty_reaction_matches_domain_integral() {
    // χ = y is one on the pulled top edge and zero on the clamped bottom
    for (nel, depth) in [(8, 2), (8, 3)] {
        let mut sim = sent(nel, depth);
        sim.staggered_step(2e-3).unwrap();
        let penalty = sim.reaction_vector();
        let domain = sim.domain_reaction(&|x| (x[1], [0.0, 1.0, 0.0]));
        assert!((penalty[1] - domain[1]).abs() < 0.01 * penalty[1].abs(), "{penalty:?} vs {domain:?}");
    }
}

#[test]
fn phase_field_is_irreversible_and_bounded() {
    let mut sim = sent(8, 3);
    let schedule = LoadSchedule {
        coarse_step: 5e-4,
        fine_step: 2e-4,
        fine_trigger_phase: 0.5,
        fine_from: None,
        max_displacement: 8e-3,
        stop_drop_ratio: 0.3,
    };
    let mut previous: Option<Vec<f64>> = None;
    quasi_static_run(&mut sim, &schedule, None, &mut |sim, point| {
        let s = sim.phase_at_points();
        assert!(s.iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-6), "step {}", point.step);
        if let Some(prev) = &previous {
            assert!(s.iter().zip(prev).all(|(a, b)| *a <= b + 1e-4), "step {}", point.step);
        }
        previous = Some(s);
    })
    .unwrap();
    assert!(sim.min_phase() < 0.5, "the run should have damaged the specimen");
}

#[test]
fn assembly_is_independent_of_thread_count() {
    let solve = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut sim = sent(4, 2);
            let k = sim.stiffness_matrix().values().to_vec();
            sim.staggered_step(4e-3).unwrap();
            (k, sim.state.displacement.clone(), sim.state.phase.clone(), sim.reaction())
        })
    };
    let one = solve(1);
    for threads in [2, 3] {
        assert!(one == solve(threads), "{threads} threads differ");
    }
}
