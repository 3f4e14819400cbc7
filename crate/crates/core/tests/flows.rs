use std::sync::Arc;

use urnflow::analysis::{attractor_distance, detect_periodic_orbit, orbit_average_vec, AttractorSpec};
use urnflow::linalg::{barycenter, distance};
use urnflow::mean_field::{derive_system, flow_to, time_average_growth, MeanLimitSystem};
use urnflow::models::{
    build_replicator, build_selection_mutation, cyclic_mutation_fixture, hypercycle, ReplicatorModel,
};

fn hypercycle_system(k: usize) -> MeanLimitSystem {
    build_replicator(hypercycle(k, 1.0, 2.5, 4.0).unwrap()).unwrap().1
}

#[test]
fn rk4_error_drops_with_step() {
    let sys = hypercycle_system(3);
    let x0 = [0.7, 0.2, 0.1];
    let t = 10.0;
    let h = 0.1;
    let reference = flow_to(&sys, &x0, t, h / 8.0).unwrap();
    let coarse = distance(&flow_to(&sys, &x0, t, h).unwrap(), &reference);
    let fine = distance(&flow_to(&sys, &x0, t, h / 2.0).unwrap(), &reference);
    assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
}

#[test]
fn growth_average_stable_under_step_halving() {
    let sys = hypercycle_system(4);
    let x0 = [0.4, 0.3, 0.2, 0.1];
    let a = time_average_growth(&sys.clone().with_step(1e-2), &x0, 200.0, 50.0).unwrap();
    let b = time_average_growth(&sys.with_step(5e-3), &x0, 200.0, 50.0).unwrap();
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn hypercycle_regimes() {
    let start = |k: usize| {
        let mut x0 = vec![0.05; k];
        x0[0] = 1.0 - 0.05 * (k - 1) as f64;
        x0
    };
    for k in 2..=3 {
        let sys = hypercycle_system(k);
        let x = flow_to(&sys, &start(k), 1000.0, sys.step).unwrap();
        assert!(distance(&x, &barycenter(k)) < 1e-6, "k = {k}: {x:?}");
    }
    // k = 4 has a purely imaginary linear part at the center, so the approach
    // is slow but monotone.
    let sys = hypercycle_system(4);
    let mut x = start(4);
    let mut last = distance(&x, &barycenter(4));
    for _ in 0..4 {
        x = flow_to(&sys, &x, 500.0, sys.step).unwrap();
        let d = distance(&x, &barycenter(4));
        assert!(d < last, "{d} >= {last}");
        last = d;
    }
    let sys = hypercycle_system(5);
    let x0 = [0.21, 0.2, 0.2, 0.2, 0.19];
    let x = flow_to(&sys, &x0, 1500.0, sys.step).unwrap();
    assert!(distance(&x, &barycenter(5)) > 0.05);
}

fn restart_reproduces_period(sys: &MeanLimitSystem, x0: &[f64], t_max: f64) {
    let spec = detect_periodic_orbit(sys, x0, t_max, 1e-6).unwrap().expect("orbit");
    let AttractorSpec::PeriodicOrbit { points, period, .. } = &spec else {
        panic!("{spec:?}")
    };
    for idx in [0, points.len() / 3, 2 * points.len() / 3] {
        let again = detect_periodic_orbit(sys, &points[idx], t_max, 1e-6)
            .unwrap()
            .expect("orbit");
        let p2 = again.period().unwrap();
        assert!((p2 - period).abs() / period < 1e-4, "{p2} vs {period}");
        assert!(attractor_distance(&points[idx], &again) < 1e-3);
    }
    let drift = orbit_average_vec(&spec, sys.dim(), |x, out| sys.drift_into(x, out)).unwrap();
    assert!(drift.iter().all(|g| g.abs() < 1e-4), "{drift:?}");
}

#[test]
fn hypercycle_orbit_restarts() {
    restart_reproduces_period(&hypercycle_system(5), &[0.3, 0.2, 0.2, 0.15, 0.15], 2000.0);
}

#[test]
fn selection_mutation_orbit_restarts() {
    let (_, sys) = build_selection_mutation(cyclic_mutation_fixture()).unwrap();
    restart_reproduces_period(&sys, &[0.34, 0.33, 0.33], 6000.0);
}

#[test]
fn selection_mutation_fixture_is_bistable() {
    let (_, sys) = build_selection_mutation(cyclic_mutation_fixture()).unwrap();
    assert!(detect_periodic_orbit(&sys, &[0.5, 0.3, 0.2], 6000.0, 1e-6)
        .unwrap()
        .is_none());
}

#[test]
fn rule_drift_and_closed_form_give_same_orbit() {
    let params = hypercycle(5, 1.0, 2.5, 4.0).unwrap();
    let rules = derive_system(Arc::new(ReplicatorModel::new(params).unwrap()));
    let closed = hypercycle_system(5);
    let x0 = [0.3, 0.2, 0.2, 0.15, 0.15];
    let a = flow_to(&rules, &x0, 100.0, 1e-2).unwrap();
    let b = flow_to(&closed, &x0, 100.0, 1e-2).unwrap();
    assert!(distance(&a, &b) < 1e-9);
}
