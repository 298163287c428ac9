use std::sync::Arc;

use approx::assert_abs_diff_eq;
use vnotch::geometry::{Aabb, FullDomain, Point};
use vnotch::mesh::MlhpMesh;
use vnotch::model::{DegradationKind, MaterialParams, ToughnessField};
use vnotch::solver::dynamics::TimeSegment;
use vnotch::solver::snapshot::Snapshot;
use vnotch::solver::{
    dynamic_run, transfer_state, BoundaryConditions, DirichletStrip, Discretization, DynamicConfig, FcmSettings,
    Problem, Simulation, StaggeredConfig,
};

fn problem(bcs: BoundaryConditions, material: MaterialParams) -> Problem {
    Problem {
        domain: Arc::new(FullDomain),
        toughness: ToughnessField::uniform(material.fracture_toughness),
        material,
        degradation: DegradationKind::Quadratic,
        fcm: FcmSettings::default(),
        bcs,
    }
}

fn face(axis: usize, at: f64, bounds: &Aabb) -> Aabb {
    let mut f = *bounds;
    f.min[axis] = at;
    f.max[axis] = at;
    f
}

fn component(c: usize, v: f64) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    out[c] = Some(v);
    out
}

/// Uniaxial tension of a bar with symmetry-plane supports.
fn uniaxial_bcs(bounds: &Aabb, dim: usize) -> BoundaryConditions {
    let mut dirichlet: Vec<DirichletStrip> = (0..dim)
        .map(|a| DirichletStrip { face: face(a, 0.0, bounds), normal_axis: a, components: component(a, 0.0) })
        .collect();
    dirichlet.push(DirichletStrip { face: face(0, bounds.max[0], bounds), normal_axis: 0, components: component(0, 1.0) });
    BoundaryConditions { dirichlet, ..Default::default() }
}

#[test]
fn zero_load_gives_zero_state_in_one_iteration() {
    let bounds = Aabb::new([0.0; 3], [2.0, 1.0, 1.0]);
    let mesh = MlhpMesh::create_base_grid(bounds, [2, 1, 1], 2, 3).unwrap();
    let mut sim = Simulation::new(problem(uniaxial_bcs(&bounds, 3), MaterialParams::default()), mesh, StaggeredConfig::default()).unwrap();
    let report = sim.staggered_step(0.0).unwrap();
    assert_eq!(report.iterations, 1);
    assert!(report.converged);
    assert!(sim.state.displacement.iter().all(|&u| u == 0.0));
    assert!(sim.phase_at_points().iter().all(|&s| (s - 1.0).abs() < 1e-10));
}

#[test]
fn uniaxial_patch_test_is_exact() {
    let bounds = Aabb::new([0.0; 3], [2.0, 1.0, 1.0]);
    let material = MaterialParams::default();
    let nu = material.poisson_ratio;
    for order in [1, 2] {
        let mesh = MlhpMesh::create_base_grid(bounds, [2, 1, 1], order, 3).unwrap();
        let mut sim = Simulation::new(problem(uniaxial_bcs(&bounds, 3), material.clone()), mesh, StaggeredConfig::default()).unwrap();
        let delta = 1e-2;
        sim.solve_elastic(delta).unwrap();
        // analytic: u_x = δ x / L, u_y = -ν δ y / L, u_z = -ν δ z / L
        let strain = delta / 2.0;
        let mesh = sim.mesh();
        let ndof = mesh.ndof();
        for x in [[0.3, 0.2, 0.9], [1.7, 0.5, 0.1], [1.0, 1.0, 0.5], [2.0, 0.0, 0.0]] {
            for c in 0..3 {
                let coeffs: Vec<f64> = (0..ndof).map(|d| sim.state.displacement[d * 3 + c]).collect();
                let exact = if c == 0 { strain * x[0] } else { -nu * strain * x[c] };
                assert_abs_diff_eq!(mesh.evaluate(&coeffs, &x).0, exact, epsilon = 1e-8);
            }
        }
    }
}

#[test]
fn penalty_error_decreases_towards_strong_imposition() {
    // clamped face x = 0, pulled face x = 2 (u_x only); p = 1 so that the
    // strong reference simply fixes the vertex coefficients on those faces
    let bounds = Aabb::new([0.0; 3], [2.0, 1.0, 1.0]);
    let material = MaterialParams::default();
    let bcs = BoundaryConditions {
        dirichlet: vec![
            DirichletStrip { face: face(0, 0.0, &bounds), normal_axis: 0, components: [Some(0.0); 3] },
            DirichletStrip { face: face(0, 2.0, &bounds), normal_axis: 0, components: component(0, 1.0) },
        ],
        ..Default::default()
    };
    let mesh = MlhpMesh::create_base_grid(bounds, [4, 2, 2], 1, 3).unwrap();
    let delta = 1e-2;

    // strong reference from the bare stiffness
    let mut free = Simulation::new(problem(BoundaryConditions::default(), material.clone()), mesh.clone(), StaggeredConfig::default()).unwrap();
    let ndof = mesh.ndof();
    let vertex_position = |d: usize| -> Point {
        // the p = 1 dof d is the unique vertex function equal to 1 at its node
        let mut best = [0.0; 3];
        for ix in 0..=4 {
            for iy in 0..=2 {
                for iz in 0..=2 {
                    let x = [ix as f64 * 0.5, iy as f64 * 0.5, iz as f64 * 0.5];
                    let mut e = vec![0.0; ndof];
                    e[d] = 1.0;
                    if (mesh.evaluate(&e, &x).0 - 1.0).abs() < 1e-12 {
                        best = x;
                    }
                }
            }
        }
        best
    };
    let positions: Vec<Point> = (0..ndof).map(vertex_position).collect();
    let mut fixed = vec![None; ndof * 3];
    for d in 0..ndof {
        if positions[d][0] == 0.0 {
            for c in 0..3 {
                fixed[d * 3 + c] = Some(0.0);
            }
        } else if positions[d][0] == 2.0 {
            fixed[d * 3] = Some(delta);
        }
    }
    let kfull = free.stiffness_matrix().to_dense();
    let free_idx: Vec<usize> = (0..ndof * 3).filter(|&i| fixed[i].is_none()).collect();
    let fixed_vals: Vec<f64> = (0..ndof * 3).map(|i| fixed[i].unwrap_or(0.0)).collect();
    let kff = nalgebra::DMatrix::from_fn(free_idx.len(), free_idx.len(), |a, b| kfull[(free_idx[a], free_idx[b])]);
    let rhs = nalgebra::DVector::from_fn(free_idx.len(), |a, _| {
        -(0..ndof * 3).map(|j| kfull[(free_idx[a], j)] * fixed_vals[j]).sum::<f64>()
    });
    let sol = kff.cholesky().unwrap().solve(&rhs);
    let mut reference = fixed_vals.clone();
    for (a, &i) in free_idx.iter().enumerate() {
        reference[i] = sol[a];
    }

    let mut errors = Vec::new();
    for factor in [1e4, 1e6, 1e8] {
        let config = StaggeredConfig { penalty_factor: factor, ..Default::default() };
        let mut sim = Simulation::new(problem(bcs.clone(), material.clone()), mesh.clone(), config).unwrap();
        sim.solve_elastic(delta).unwrap();
        let err = sim
            .state
            .displacement
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        errors.push(err);
    }
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
    assert!(errors[2] < 1e-6 * delta, "{errors:?}");
}

#[test]
fn phase_profile_1d_matches_exponential() {
    let l = 1.0;
    let half = 20.0 * l;
    let bounds = Aabb::new([-half, 0.0, 0.0], [half, 0.0, 0.0]);
    let nel = (2.0 * half / (l / 4.0)) as usize;
    let mesh = MlhpMesh::create_base_grid(bounds, [nel, 1, 1], 2, 1).unwrap();
    let material = MaterialParams { length_scale: l, ..Default::default() };
    let bcs = BoundaryConditions { phase_pins: vec![[0.0, 0.0, 0.0]], ..Default::default() };
    let mut sim = Simulation::new(problem(bcs, material), mesh, StaggeredConfig::default()).unwrap();
    sim.solve_phase().unwrap();
    let mut worst = 0.0f64;
    for i in 0..=400 {
        let x = -half + 2.0 * half * i as f64 / 400.0;
        let s = sim.mesh().evaluate(&sim.state.phase, &[x, 0.0, 0.0]).0;
        let exact = 1.0 - (-x.abs() / (2.0 * l)).exp();
        worst = worst.max((s - exact).abs());
    }
    assert!(worst < 0.01, "L∞ error {worst}");
}

#[test]
fn concentrated_history_dips_phase_field() {
    let l = 0.5;
    let bounds = Aabb::new([-10.0, 0.0, 0.0], [10.0, 0.0, 0.0]);
    let mesh = MlhpMesh::create_base_grid(bounds, [80, 1, 1], 2, 1).unwrap();
    let material = MaterialParams { length_scale: l, ..Default::default() };
    let mut sim = Simulation::new(problem(BoundaryConditions::default(), material), mesh, StaggeredConfig::default()).unwrap();
    let centre = sim.mesh().locate(&[0.01, 0.0, 0.0]);
    let pos = sim.mesh().leaves().binary_search(&centre).unwrap();
    let disc = sim.discretization();
    let range = disc.point_offset(pos)..disc.point_offset(pos + 1);
    for i in range {
        sim.state.history.values[i] = 1e3;
    }
    sim.solve_phase().unwrap();
    let s = |x: f64| sim.mesh().evaluate(&sim.state.phase, &[x, 0.0, 0.0]).0;
    assert!(s(0.125) < 0.1, "s at the driven cell: {}", s(0.125));
    let mut prev = s(0.25);
    for i in 1..=40 {
        let x = 0.25 + 0.2 * i as f64;
        let cur = s(x);
        assert!(cur >= prev - 1e-9, "not monotone at x = {x}");
        prev = cur;
    }
    assert!(prev > 0.99);
}

#[test]
fn newmark_conserves_energy_of_free_vibration() {
    let bounds = Aabb::new([0.0; 3], [2.0, 1.0, 0.0]);
    let mesh = MlhpMesh::create_base_grid(bounds, [4, 2, 1], 2, 2).unwrap();
    let mut sim = Simulation::new(problem(BoundaryConditions::default(), MaterialParams::default()), mesh, StaggeredConfig::default()).unwrap();
    // initial stretch u_x = 0.01 (x - 1), at rest
    let ux = sim.discretization().project(&|_, x| 0.01 * (x[0] - 1.0)).unwrap();
    for (d, v) in ux.iter().enumerate() {
        sim.state.displacement[d * 2] = *v;
    }
    let config = DynamicConfig { segments: vec![TimeSegment { dt: 0.02, steps: 100 }], fracture: false, ..Default::default() };
    let traj = dynamic_run(&mut sim, &config, &mut |_, _| {}).unwrap();
    let e0 = traj.frames[0].total_energy();
    assert!(e0 > 0.0);
    let max_kinetic = traj.frames.iter().map(|f| f.kinetic_energy).fold(0.0, f64::max);
    assert!(max_kinetic > 0.1 * e0, "the bar should actually vibrate");
    for f in &traj.frames {
        assert!((f.total_energy() - e0).abs() / e0 < 1e-3, "drift at step {}", f.step);
    }
}

#[test]
fn zero_load_dynamics_stay_at_rest() {
    let bounds = Aabb::new([0.0; 3], [2.0, 1.0, 0.0]);
    let mesh = MlhpMesh::create_base_grid(bounds, [2, 1, 1], 2, 2).unwrap();
    let mut sim = Simulation::new(problem(uniaxial_bcs(&bounds, 2), MaterialParams::default()), mesh, StaggeredConfig::default()).unwrap();
    let config = DynamicConfig { load_factor: 0.0, segments: vec![TimeSegment { dt: 1e-4, steps: 5 }], ..Default::default() };
    dynamic_run(&mut sim, &config, &mut |_, _| {}).unwrap();
    assert!(sim.state.displacement.iter().all(|&u| u == 0.0));
    assert!(sim.state.velocity.as_ref().unwrap().iter().all(|&u| u == 0.0));
}

#[test]
fn transfer_preserves_polynomials_and_converges() {
    let bounds = Aabb::new([0.0; 3], [2.0, 2.0, 0.0]);
    let p = problem(BoundaryConditions::default(), MaterialParams::default());
    let coarse_mesh = MlhpMesh::create_base_grid(bounds, [2, 2, 1], 2, 2).unwrap();
    let coarse = Discretization::new(coarse_mesh.clone(), &p).unwrap();
    let quad = |x: &Point| 1.0 + 0.3 * x[0] - 0.2 * x[1] * x[0] + 0.1 * x[1] * x[1];
    let phase = coarse.project(&|_, x| quad(x)).unwrap();
    let state = vnotch::solver::FieldState {
        displacement: vec![0.0; coarse_mesh.ndof() * 2],
        phase: phase.clone(),
        history: vnotch::model::HistoryField::zeros(coarse.npoints()),
        velocity: None,
        acceleration: None,
    };
    let mut fine_mesh = coarse_mesh.clone();
    fine_mesh.refine_region(&|b: &Aabb| b.min[0] < 0.5 && b.min[1] < 0.5, 2);
    let fine = Discretization::new(fine_mesh.clone(), &p).unwrap();
    let moved = transfer_state(&state, &coarse, &fine).unwrap();
    for x in [[0.1, 0.1, 0.0], [0.3, 0.45, 0.0], [1.5, 1.7, 0.0], [0.9, 0.2, 0.0]] {
        assert_abs_diff_eq!(fine_mesh.evaluate(&moved.phase, &x).0, quad(&x), epsilon = 1e-10);
    }

    // smooth non-polynomial field: projection error shrinks with refinement
    let smooth = |x: &Point| (2.0 * x[0]).sin() * (1.5 * x[1]).cos();
    let mut errors = Vec::new();
    for depth in 0..3u8 {
        let mut mesh = coarse_mesh.clone();
        mesh.refine_region(&|_| true, depth);
        let d = Discretization::new(mesh.clone(), &p).unwrap();
        let c = d.project(&|_, x| smooth(x)).unwrap();
        let err = (0..=20)
            .flat_map(|i| (0..=20).map(move |j| [0.1 * i as f64, 0.1 * j as f64, 0.0]))
            .map(|x| (mesh.evaluate(&c, &x).0 - smooth(&x)).abs())
            .fold(0.0f64, f64::max);
        errors.push(err);
    }
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn snapshot_round_trip_restores_state() {
    let bounds = Aabb::new([0.0; 3], [2.0, 1.0, 0.0]);
    let mut mesh = MlhpMesh::create_base_grid(bounds, [2, 1, 1], 2, 2).unwrap();
    mesh.refine_region(&|b: &Aabb| b.min[0] < 0.5, 2);
    let p = problem(uniaxial_bcs(&bounds, 2), MaterialParams::default());
    let mut sim = Simulation::new(p.clone(), mesh, StaggeredConfig::default()).unwrap();
    sim.staggered_step(1e-2).unwrap();
    let mut buf = Vec::new();
    Snapshot::of(&sim).write(&mut buf).unwrap();
    let snap = Snapshot::read(buf.as_slice()).unwrap();
    let rebuilt = snap.mesh.build().unwrap();
    assert_eq!(rebuilt.ndof(), sim.mesh().ndof());
    assert_eq!(rebuilt.leaves(), sim.mesh().leaves());
    let restored = Simulation::with_state(p, rebuilt, StaggeredConfig::default(), snap.state, snap.load).unwrap();
    assert_eq!(restored.state, sim.state);
    assert_eq!(restored.reaction_vector(), sim.reaction_vector());
    assert!(Snapshot::read(&b"{\"format\":\"other\"}"[..]).is_err());
}

/// Homogeneous phase field under uniform history with cubic degradation:
/// s solves s (1 + c (φ(3s − 2) + 6(1 − s))) = 1 with c = 2 l H / G_c,
/// which leaves the intact branch once c exceeds about 1/6.
#[test]
fn cubic_homogeneous_phase_follows_lagged_fixed_point() {
    let material = MaterialParams { length_scale: 0.25, ..Default::default() };
    let (l, gc, phi) = (material.length_scale, material.fracture_toughness, material.phi);
    let bounds = Aabb::new([0.0; 3], [4.0, 0.0, 0.0]);
    for c in [0.1, 0.5, 2.0] {
        let mesh = MlhpMesh::create_base_grid(bounds, [4, 1, 1], 2, 1).unwrap();
        let mut p = problem(BoundaryConditions::default(), material.clone());
        p.degradation = DegradationKind::Cubic;
        let mut sim = Simulation::new(p, mesh, StaggeredConfig { phase_iterations: 500, ..Default::default() }).unwrap();
        let h = c * gc / (2.0 * l);
        sim.state.history.values.iter_mut().for_each(|v| *v = h);
        sim.solve_phase().unwrap();
        let f = |s: f64| s * (1.0 + c * (phi * (3.0 * s - 2.0) + 6.0 * (1.0 - s))) - 1.0;
        // f(0) < 0 < f(1) and the root is unique in between
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 { lo = mid } else { hi = mid }
        }
        let expected = 0.5 * (lo + hi);
        for s in sim.phase_at_points() {
            assert!((s - expected).abs() < 1e-4, "c = {c}: s = {s}, expected {expected}");
        }
    }
}
