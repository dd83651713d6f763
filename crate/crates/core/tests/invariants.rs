//! Module invariants that need more than a unit fixture: mesh quality,
//! growth trend, flattening distortion and the surgery convergence sweeps.

use conformal_lab::bounds::{korevaar_trend, sphere_normalized_eigenvalue};
use conformal_lab::constructions::flatten_density_near;
use conformal_lab::experiments::{run_glue_sweep, run_handle, GlueMode, MeshSource};
use conformal_lab::mesh::{build_flat_torus, build_icosphere, Lattice, TriangleMesh, MAX_SUBDIVISIONS};
use conformal_lab::spectral::ConformalDensity;

const AREA_RATIO_LIMIT: f64 = 1.3;
const KOREVAAR_SLOPE_TOL: f64 = 0.15;
const FLATTEN_SLOPE: f64 = 2.0;
const FLATTEN_SLOPE_TOL: f64 = 0.3;
const SURGERY_TOL: f64 = 0.05;

#[test]
fn icosphere_face_areas_are_uniform() {
    for subdivisions in 0..=MAX_SUBDIVISIONS {
        let mesh = build_icosphere(subdivisions).unwrap();
        let areas: Vec<f64> = (0..mesh.num_faces()).map(|f| mesh.face_area(f)).collect();
        let max = areas.iter().cloned().fold(0.0, f64::max);
        let min = areas.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            max / min <= AREA_RATIO_LIMIT,
            "subdivision {subdivisions}: face area ratio {:.4}",
            max / min
        );
    }
}

#[test]
fn torus_area_is_exact_for_all_resolutions() {
    let lattice = Lattice::new([1.3, 0.2], [0.4, 0.9]).unwrap();
    for res in 4..=40 {
        let mesh = build_flat_torus(lattice, res).unwrap();
        assert!((mesh.total_area() / lattice.covolume() - 1.0).abs() < 1e-12);
        assert_eq!(mesh.euler_characteristic(), 0);
    }
}

#[test]
fn sphere_sequence_grows_linearly() {
    let values: Vec<(u64, f64)> = (1..=50).map(|k| (k, sphere_normalized_eigenvalue(k))).collect();
    let fit = korevaar_trend(&values).unwrap();
    assert!((fit.slope - 1.0).abs() < KOREVAAR_SLOPE_TOL, "slope {}", fit.slope);
}

/// Conformal factor squared of the stereographic dilation `y -> 2y`,
/// centered so that `center` maps to the origin.
fn dilation_density(center: usize) -> (TriangleMesh, ConformalDensity) {
    let mesh = build_icosphere(4).unwrap();
    let c = mesh.positions()[center];
    let lambda = 2.0;
    let values = mesh
        .positions()
        .iter()
        .map(|p| {
            let dot = p[0] * c[0] + p[1] * c[1] + p[2] * c[2];
            let f = 2.0 * lambda / (1.0 + dot + lambda * lambda * (1.0 - dot));
            f * f
        })
        .collect();
    (mesh, ConformalDensity::new(values).unwrap())
}

#[test]
fn flattening_distortion_is_quadratic_in_radius() {
    let (mesh, rho) = dilation_density(0);
    let radii = [0.1, 0.2, 0.4];
    let points: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let out = flatten_density_near(&mesh, &rho, 0, r, r).unwrap();
            (r.ln(), out.delta.ln())
        })
        .collect();
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!(
        (slope - FLATTEN_SLOPE).abs() < FLATTEN_SLOPE_TOL,
        "log-log slope {slope}"
    );
}

#[test]
fn flattening_distortion_tracks_blend_support() {
    let (mesh, rho) = dilation_density(0);
    let wide = flatten_density_near(&mesh, &rho, 0, 0.2, 0.3).unwrap();
    let narrow = flatten_density_near(&mesh, &rho, 0, 0.2, 0.05).unwrap();
    assert!(narrow.delta <= wide.delta);
    assert!(narrow.delta > 0.0);
}

#[test]
fn sphere_torus_glue_converges_to_union() {
    let area = 4.0 * std::f64::consts::PI;
    let lattice = Lattice::equilateral().scaled((area / Lattice::equilateral().covolume()).sqrt());
    let report = run_glue_sweep(
        MeshSource::Torus {
            lattice,
            resolution: 48,
        },
        MeshSource::Icosphere { subdivisions: 4 },
        vec![0.2, 0.1, 0.05, 0.025],
        6,
        GlueMode::Union,
        SURGERY_TOL,
    )
    .unwrap();
    let errors: Vec<f64> = serde_json::from_value(report.values["errors"].clone()).unwrap();
    println!("sphere + torus glue errors {errors:?}");
    assert!(report.check("union_error_monotone").unwrap().pass, "errors {errors:?}");
    assert!(report.check("union_error_final").unwrap().pass, "errors {errors:?}");
}

#[test]
fn torus_handle_converges_to_union_with_segment() {
    let report = run_handle(
        MeshSource::Torus {
            lattice: Lattice::equilateral().scaled(1.8),
            resolution: 32,
        },
        vec![0.08, 0.04, 0.02],
        0.5,
        8,
        4,
        SURGERY_TOL,
    )
    .unwrap();
    let errors: Vec<f64> = serde_json::from_value(report.values["union_errors"].clone()).unwrap();
    println!("torus handle union errors {errors:?}");
    assert!(report.check("union_error_monotone").unwrap().pass, "errors {errors:?}");
    assert!(report.check("union_error_final").unwrap().pass, "errors {errors:?}");
}
