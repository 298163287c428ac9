use std::fs::File;

use vnotch::io::{write_ply, write_stl, PlyEncoding};
use vnotch::postprocess::{CrackSurface, PointSet};
use vnotch_cli::config::{MetricsConfig, BUNDLED};
use vnotch_cli::{run, CliError, Mode, RunConfig};

#[test]
fn bundled_configs_round_trip() {
    for (name, _) in BUNDLED {
        let config = RunConfig::bundled(name).unwrap();
        assert_eq!(config.name, name);
        let text = config.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
    }
}

#[test]
fn defaults_mirror_parameter_table() {
    let config = RunConfig::from_toml("name = \"x\"\nmode = \"quasi_static\"\n").unwrap();
    let m = &config.material;
    assert_eq!(m.youngs_modulus_kn_per_mm2, 12.44);
    assert_eq!(m.poisson_ratio, 0.2);
    assert_eq!(m.fracture_toughness_kn_per_mm, 1e-3);
    assert_eq!(m.critical_stress_mpa, 48.0);
    assert_eq!(m.length_scale_mm, 0.125);
    assert_eq!(m.density, 1.066);
    assert_eq!(config.mesh.fcm_alpha, 1e-4);
    assert_eq!(config.solver.staggered_tolerance, 5e-3);
    assert_eq!(config.solver.max_staggered_iterations, 35);
    assert_eq!(config.quasi_static.coarse_step_mm, 5e-3);
    assert_eq!(config.quasi_static.fine_step_mm, 5e-4);
    assert_eq!(config.dynamic.segments[0].dt_s, 1e-4);
    assert_eq!(config.dynamic.segments[1].dt_s, 2e-5);
    assert_eq!(config.dynamic.pressure_kn_per_mm2, 2e-9);
    assert_eq!(config.degradation(), vnotch::model::DegradationKind::Cubic);
    let text = config.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
}

#[test]
fn validation_errors_name_the_field() {
    let cases = [
        ("[geometry]\ninclination_deg = 75.0\n", "geometry.inclination_deg"),
        ("[mesh]\norder = 0\n", "mesh.order"),
        ("[mesh]\nmax_depth = 2\ninitial_depth = 3\n", "mesh.initial_depth"),
        ("[quasi_static]\ncoarse_step_mm = -1.0\n", "quasi_static.coarse_step_mm"),
        ("[material]\npoisson_ratio = 0.5\n", "material"),
    ];
    for (body, field) in cases {
        let text = format!("name = \"x\"\nmode = \"quasi_static\"\n{body}");
        match RunConfig::from_toml(&text) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, field),
            other => panic!("{body}: {other:?}"),
        }
    }
    assert!(RunConfig::from_toml("name = \"x\"\nmode = \"metrics_only\"\n").is_err());
    assert!(RunConfig::from_toml("name = \"x\"\nmode = \"quasi_static\"\nunknown = 1\n").is_err());
}

fn metrics_config(dir: &std::path::Path, surface: &CrackSurface, cloud: &PointSet) -> RunConfig {
    write_stl(File::create(dir.join("surface.stl")).unwrap(), surface).unwrap();
    write_ply(File::create(dir.join("cloud.ply")).unwrap(), cloud, PlyEncoding::BinaryLittleEndian).unwrap();
    let mut config = RunConfig::from_toml("name = \"metrics\"\nmode = \"quasi_static\"\n").unwrap();
    config.mode = Mode::MetricsOnly;
    config.metrics = Some(MetricsConfig {
        surface_stl: Some("surface.stl".into()),
        cloud_ply: "cloud.ply".into(),
        cloud_transform: None,
        part_filter: None,
        notch_length_mm: None,
        angles: true,
    });
    config
}

fn bisector_surface() -> CrackSurface {
    let p = |i: usize, j: usize| [40.0, 6.0 + 0.125 * i as f64, 0.25 * j as f64];
    let mut triangles = Vec::new();
    for i in 0..16 {
        for j in 0..40 {
            triangles.push([p(i, j), p(i + 1, j), p(i + 1, j + 1)]);
            triangles.push([p(i, j), p(i + 1, j + 1), p(i, j + 1)]);
        }
    }
    CrackSurface { triangles, level: 0.03, step: 0 }
}

#[test]
fn metrics_only_with_identical_data_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let surface = bisector_surface();
    let cloud = PointSet::from(&surface);
    let config = metrics_config(dir.path(), &surface, &cloud);
    let out = dir.path().join("out");
    let summary = run(&config, dir.path(), &out).unwrap();
    let m = summary.metrics.unwrap();
    assert_eq!((m.hd, m.mhd), (0.0, 0.0));
    assert_eq!(m.surface_vertices, 17 * 41);
    assert!(m.theta_at_front_deg.unwrap().abs() < 1e-6);
    for name in ["summary.json", "surface_distances.csv", "initiation_angles.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let surface = bisector_surface();
    let mut config = metrics_config(dir.path(), &surface, &PointSet::from(&surface));
    config.metrics.as_mut().unwrap().cloud_ply = "absent.ply".into();
    match run(&config, dir.path(), &dir.path().join("out")) {
        Err(CliError::Config { path, .. }) => assert_eq!(path, "metrics.cloud_ply"),
        other => panic!("{other:?}"),
    }
}

fn short_sent() -> RunConfig {
    let mut config = RunConfig::bundled("senttension_2d").unwrap();
    config.mesh.base_elements = [4, 4, 1];
    config.mesh.initial_depth = 1;
    config.mesh.max_depth = 1;
    config.quasi_static.max_displacement_mm = 1e-3;
    config
}

#[test]
fn reruns_produce_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_sent();
    let a = run(&config, dir.path(), &dir.path().join("a")).unwrap();
    let b = run(&config, dir.path(), &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    for name in ["load_displacement.csv", "mesh_stats.csv", "summary.json"] {
        let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/load_displacement.csv")).unwrap();
    assert!(csv.starts_with("# vnotch load-displacement v1\n"));
    assert_eq!(csv.lines().count(), 2 + a.steps);
}
