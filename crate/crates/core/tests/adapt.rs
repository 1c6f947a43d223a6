use fvbem::adapt::{adaptive_loop, adaptive_loop_with, doerfler_mark, AdaptiveConfig, StopCriteria};
use fvbem::estimator::EstimatorKind;
use fvbem::model::{builtin_problem, Example};
use proptest::prelude::*;

fn steps(theta: f64, upwind: bool, n: usize) -> AdaptiveConfig {
    let mut cfg = AdaptiveConfig::new(theta, upwind);
    cfg.stop = StopCriteria { max_elements: 100_000, max_steps: n };
    cfg
}

#[test]
fn uniform_path_quadruples() {
    let spec = builtin_problem(Example::Ex1).unwrap();
    let h = adaptive_loop(&spec, &steps(1.0, false, 4));
    assert!(h.failure.is_none());
    let n: Vec<usize> = h.steps.iter().map(|r| r.n_elements).collect();
    assert_eq!(n, vec![48, 192, 768, 3072]);
    let m: Vec<usize> = h.steps.iter().map(|r| r.n_boundary).collect();
    assert_eq!(m, vec![16, 32, 64, 128]);
}

#[test]
fn refinement_concentrates_at_reentrant_corner() {
    let spec = builtin_problem(Example::Ex1).unwrap();
    let mut share = None;
    let h = adaptive_loop_with(&spec, &steps(0.5, false, 3), |v| {
        if v.step == 1 {
            let near = v.marked.iter().filter(|&&t| v.discretization.mesh.geometry(t).barycenter.norm() < 0.1).count();
            share = Some(near as f64 / v.marked.len() as f64);
        }
        Ok(())
    });
    assert!(h.failure.is_none());
    assert!(share.unwrap() >= 0.5, "{share:?}");
}

#[test]
fn history_is_monotone_and_reproducible() {
    let spec = builtin_problem(Example::Ex3).unwrap();
    let cfg = steps(0.5, true, 5);
    let a = adaptive_loop(&spec, &cfg);
    let b = adaptive_loop(&spec, &cfg);
    assert!(a.steps.windows(2).all(|w| w[1].n_elements > w[0].n_elements));
    assert!(a.steps.iter().enumerate().all(|(k, r)| r.step == k));
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!((x.n_elements, x.eta.to_bits(), x.eta_up.to_bits()), (y.n_elements, y.eta.to_bits(), y.eta_up.to_bits()));
        assert!(x.phi_mean.abs() <= 1e-10);
    }
    let strip = |csv: String| csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(a.to_csv()), strip(b.to_csv()));
    assert!(a.to_csv().lines().nth(1).unwrap().contains(",,,"));
}

#[test]
fn element_cap_skips_the_solve() {
    let spec = builtin_problem(Example::Ex1).unwrap();
    let mut cfg = steps(1.0, false, 10);
    cfg.stop.max_elements = 800;
    let h = adaptive_loop(&spec, &cfg);
    assert_eq!(h.steps.last().unwrap().n_elements, 768);
    assert!(h.failure.is_none());
}

#[test]
fn nonrobust_variant_runs() {
    let spec = builtin_problem(Example::Ex1).unwrap();
    let mut cfg = steps(0.5, false, 3);
    cfg.estimator = EstimatorKind::NonRobust;
    let h = adaptive_loop(&spec, &cfg);
    assert!(h.failure.is_none());
    assert!(h.steps.iter().all(|r| r.efficiency().unwrap() > 0.1));
}

proptest! {
    #[test]
    fn marked_set_is_minimal(values in proptest::collection::vec(0.0f64..10.0, 1..60), theta in 0.01f64..0.99) {
        prop_assume!(values.iter().sum::<f64>() > 0.0);
        let marked = doerfler_mark(&values, theta).unwrap();
        let total: f64 = values.iter().sum();
        let sum: f64 = marked.iter().map(|&t| values[t]).sum();
        prop_assert!(sum >= theta * total);
        let smallest = marked.iter().map(|&t| values[t]).fold(f64::INFINITY, f64::min);
        prop_assert!(sum - smallest < theta * total);
        for t in 0..values.len() {
            if !marked.contains(&t) {
                prop_assert!(values[t] <= smallest);
            }
        }
    }
}
