use std::f64::consts::PI;

use fvbem::adapt::{adaptive_loop_with, AdaptiveConfig, StopCriteria};
use fvbem::bem::{assemble_v, BoundaryMesh, LayerMatrices};
use fvbem::mesh::{build_initial_mesh, Domain, Point};
use fvbem::model::{builtin_problem, Example};
use fvbem::quadrature::graded_toward_zero;
use fvbem::verify::{check_proportho, fem_equivalence_check};
use proptest::prelude::*;

fn early_steps(ex: Example, upwind: bool, mut f: impl FnMut(&fvbem::adapt::StepView<'_>)) {
    let spec = builtin_problem(ex).unwrap();
    let mut cfg = AdaptiveConfig::new(0.5, upwind);
    cfg.stop = StopCriteria { max_elements: 100_000, max_steps: 3 };
    let history = adaptive_loop_with(&spec, &cfg, |v| {
        f(v);
        Ok(())
    });
    assert!(history.failure.is_none(), "{:?}", history.failure);
}

#[test]
fn residual_orthogonality_on_early_meshes() {
    for ex in [Example::Ex1, Example::Ex2, Example::Ex3] {
        let spec = builtin_problem(ex).unwrap();
        early_steps(ex, false, |v| {
            if v.step == 0 || v.step == 2 {
                let r = check_proportho(v.discretization, &spec, v.solution);
                assert!(r.relative() <= 1e-9, "{ex:?} step {}: {:e}", v.step, r.relative());
            }
        });
    }
}

#[test]
fn upwind_runs_break_orthogonality() {
    let spec = builtin_problem(Example::Ex3).unwrap();
    early_steps(Example::Ex3, true, |v| {
        if v.step == 0 {
            assert!(check_proportho(v.discretization, &spec, v.solution).relative() > 1e-6);
        }
    });
}

#[test]
fn boundary_rows_are_solved_tightly() {
    for ex in [Example::Ex1, Example::Ex2, Example::Ex3] {
        let upwind = builtin_problem(ex).unwrap().upwind_default;
        early_steps(ex, upwind, |v| assert!(v.solution.bem_residual <= 1e-10));
    }
}

#[test]
fn half_minus_k_reproduces_lengths_on_adaptive_boundaries() {
    for ex in [Example::Ex1, Example::Ex2, Example::Ex3] {
        early_steps(ex, true, |v| {
            let bm = &v.discretization.boundary;
            let r = v.discretization.layers.half_minus_k() * nalgebra::DVector::from_element(bm.n_edges(), 1.0);
            for (k, s) in bm.segments().iter().enumerate() {
                assert!((r[k] - s.length).abs() <= 1e-12);
            }
        });
    }
}

/// `-1/(2 pi) int_0^h int_0^h log|s - t|` with the inner integral in closed
/// form and the outer one by graded quadrature toward both endpoints.
fn self_entry_oracle(h: f64) -> f64 {
    let inner = |s: f64| {
        let xlogx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
        xlogx(s) + xlogx(h - s) - h
    };
    let half = 0.5 * h * (graded_toward_zero(|t| inner(0.5 * h * t)) + graded_toward_zero(|t| inner(h - 0.5 * h * t)));
    -half / (2.0 * PI)
}

#[test]
fn single_layer_diagonal_matches_oracle() {
    for h in [0.01, 0.0625, 0.25, 0.5] {
        let bm = BoundaryMesh::from_polygon(vec![Point::new(0.0, 0.0), Point::new(h, 0.0), Point::new(h, h), Point::new(0.0, h)]).unwrap();
        let v = assemble_v(&bm);
        for k in 0..4 {
            assert!((v[(k, k)] - self_entry_oracle(h)).abs() <= 1e-12, "h = {h}");
        }
    }
}

#[test]
fn fvm_equals_fem_for_piecewise_alpha_on_refined_meshes() {
    let spec = builtin_problem(Example::Ex2).unwrap();
    early_steps(Example::Ex2, true, |v| {
        let mesh = &v.discretization.mesh;
        let alpha: Vec<f64> = (0..mesh.n_triangles())
            .map(|t| {
                let c = mesh.geometry(t).barycenter;
                spec.diffusion.lambda_min(c, c)
            })
            .collect();
        assert!(fem_equivalence_check(mesh, &alpha).unwrap() <= 1e-13);
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fvm_equals_fem_for_random_alpha(seed in proptest::collection::vec(0.01f64..100.0, 48)) {
        let mesh = build_initial_mesh(Domain::LShape, 48).unwrap();
        prop_assert!(fem_equivalence_check(&mesh, &seed).unwrap() <= 1e-13 * seed.iter().cloned().fold(1.0, f64::max));
    }

    #[test]
    fn half_minus_k_on_star_polygons(radii in proptest::collection::vec(0.05f64..0.2, 5..24)) {
        let m = radii.len();
        let pts = radii.iter().enumerate().map(|(k, r)| {
            let a = 2.0 * PI * k as f64 / m as f64;
            Point::new(r * a.cos(), r * a.sin())
        }).collect();
        let bm = BoundaryMesh::from_polygon(pts).unwrap();
        let l = LayerMatrices::assemble(&bm);
        let r = l.half_minus_k() * nalgebra::DVector::from_element(m, 1.0);
        for (k, s) in bm.segments().iter().enumerate() {
            prop_assert!((r[k] - s.length).abs() <= 1e-12);
        }
    }
}
