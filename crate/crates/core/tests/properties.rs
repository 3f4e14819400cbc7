use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use urnflow::analysis::{boundary_equilibria, check_permanence, interior_equilibrium, InteriorEquilibrium};
use urnflow::linalg::simplex_from_uniforms;
use urnflow::mean_field::derive_system;
use urnflow::models::{
    build_replicator, hypercycle, ReplicatorModel, ReplicatorParams, SelectionMutationModel, SelectionMutationParams,
};
use urnflow::urn::{simulate, validate_model, StopCondition, UrnModel, UrnState};

fn matrix(k: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| entries[i * k + j])
}

fn replicator_params() -> impl Strategy<Value = ReplicatorParams> {
    (2usize..=5).prop_flat_map(|k| {
        (
            prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), k * k),
            0.05..2.0f64,
            0.05..2.0f64,
            0.05..5.0f64,
        )
            .prop_map(move |(bd, b, d, nu)| {
                let birth: Vec<f64> = bd.iter().map(|(u, _)| *u).collect();
                let death: Vec<f64> = bd.iter().map(|(u, v)| v * (1.0 - u)).collect();
                ReplicatorParams {
                    k,
                    b,
                    d,
                    nu,
                    birth: matrix(k, &birth),
                    death: matrix(k, &death),
                }
            })
    })
}

fn selection_mutation_params() -> impl Strategy<Value = SelectionMutationParams> {
    (2usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(0.0..3.0f64, k * k),
            prop::collection::vec(0.0..0.3f64, k * k),
            0.05..2.0f64,
            0.05..5.0f64,
        )
            .prop_map(move |(f, m, d, nu)| {
                let fitness = DMatrix::from_fn(k, k, |i, j| f[i.min(j) * k + i.max(j)]);
                let mutation = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { m[i * k + j] });
                SelectionMutationParams::with_default_offspring(d, nu, fitness, mutation)
            })
    })
}

fn states(k: usize) -> impl Strategy<Value = Vec<UrnState>> {
    prop::collection::vec((prop::collection::vec(0.0..1.0f64, k), 10u64..=10_000), 1..20).prop_map(|v| {
        v.into_iter()
            .map(|(u, n)| UrnState::from_frequencies(&simplex_from_uniforms(&u), n))
            .collect()
    })
}

fn point(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, k).prop_map(|u| simplex_from_uniforms(&u))
}

fn check_kernel(model: &dyn UrnModel, zs: &[UrnState]) -> Result<(), TestCaseError> {
    let report = validate_model(model, zs);
    prop_assert!(report.normalization_error <= 1e-12, "{report:?}");
    prop_assert!(report.is_valid(), "{report:?}");
    let a = model.a_bound().expect("builders report their constant");
    prop_assert!(report.empirical_a <= a + 1e-12, "{} > {a}", report.empirical_a);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replicator_kernel_is_normalized_and_close_to_limit(
        (p, zs) in replicator_params().prop_flat_map(|p| { let k = p.k; (Just(p), states(k)) })
    ) {
        let model = ReplicatorModel::new(p).unwrap();
        check_kernel(&model, &zs)?;
    }

    #[test]
    fn selection_mutation_kernel_is_normalized_and_close_to_limit(
        (p, zs) in selection_mutation_params().prop_flat_map(|p| { let k = p.k; (Just(p), states(k)) })
    ) {
        let model = SelectionMutationModel::new(p).unwrap();
        check_kernel(&model, &zs)?;
    }

    #[test]
    fn drift_is_tangent(
        (p, q, xs) in (2usize..=4).prop_flat_map(|k| (
            replicator_params().prop_filter("k", move |p| p.k == k),
            selection_mutation_params().prop_filter("k", move |p| p.k == k),
            prop::collection::vec(point(k), 20),
        ))
    ) {
        let rep = derive_system(Arc::new(ReplicatorModel::new(p).unwrap()));
        let sm = derive_system(Arc::new(SelectionMutationModel::new(q).unwrap()));
        for x in &xs {
            prop_assert!(rep.drift(x).iter().sum::<f64>().abs() < 1e-12);
            prop_assert!(sm.drift(x).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn hypercycle_growth_closed_form(
        k in 2usize..=6, b in 0.1..3.0f64, d in 0.1..3.0f64, nu in 0.1..6.0f64,
        u in prop::collection::vec(0.0..1.0f64, 6),
    ) {
        let x = simplex_from_uniforms(&u[..k]);
        let model = ReplicatorModel::new(hypercycle(k, b, d, nu).unwrap()).unwrap();
        let sys = derive_system(Arc::new(model));
        let s = b + d + nu;
        let cyc: f64 = (0..k).map(|i| x[i] * x[(i + k - 1) % k]).sum();
        let closed = (b - d) / s + 2.0 * nu / s * cyc;
        prop_assert!((sys.growth(&x) - closed).abs() < 1e-10);
    }

    #[test]
    fn payoff_ignores_common_shift(p in replicator_params(), c in 0.0..0.5f64) {
        let a = p.payoff();
        let mut shifted = p.clone();
        shifted.birth.add_scalar_mut(c);
        shifted.death.add_scalar_mut(c);
        let diff = (shifted.payoff() - a).amax();
        prop_assert!(diff < 1e-12);
    }

    #[test]
    fn closed_form_field_matches_rules(p in replicator_params(), u in prop::collection::vec(0.0..1.0f64, 5)) {
        let x = simplex_from_uniforms(&u[..p.k]);
        let (model, closed, _) = build_replicator(p).unwrap();
        let rules = derive_system(model);
        let (g1, g2) = (closed.drift(&x), rules.drift(&x));
        for (a, b) in g1.iter().zip(&g2) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!((closed.growth(&x) - rules.growth(&x)).abs() < 1e-10);
    }

    #[test]
    fn boundary_equilibria_commute_with_relabeling(
        (k, entries, perm) in (2usize..=4).prop_flat_map(|k| (
            Just(k),
            prop::collection::vec(-2.0..2.0f64, k * k),
            Just((0..k).collect::<Vec<usize>>()).prop_shuffle(),
        ))
    ) {
        let a = matrix(k, &entries);
        let pa = DMatrix::from_fn(k, k, |i, j| a[(perm[i], perm[j])]);
        let e1 = boundary_equilibria(&a, 1e-12).unwrap();
        let e2 = boundary_equilibria(&pa, 1e-12).unwrap();
        prop_assert_eq!(e1.len(), e2.len());
        for eq in &e2.equilibria {
            prop_assert!(eq.residual <= 1e-9);
            // Coordinate i of the relabeled system is coordinate perm[i] of
            // the original one.
            let mut back = vec![0.0; k];
            for i in 0..k {
                back[perm[i]] = eq.x[i];
            }
            let found = e1.equilibria.iter().any(|o| o.x.iter().zip(&back).all(|(u, v)| (u - v).abs() < 1e-7));
            prop_assert!(found, "{:?} not among {:?}", back, e1.equilibria);
        }
    }

    #[test]
    fn permanence_is_homogeneous_in_weights(
        (k, entries, p) in (2usize..=4).prop_flat_map(|k| (
            Just(k),
            prop::collection::vec(-2.0..2.0f64, k * k),
            prop::collection::vec(0.1..2.0f64, k),
        )),
        c in 0.1..10.0f64,
    ) {
        let a = matrix(k, &entries);
        let eqs = boundary_equilibria(&a, 1e-12).unwrap();
        let r1 = check_permanence(&a, &p, &eqs, None, 0.0).unwrap();
        let scaled: Vec<f64> = p.iter().map(|v| v * c).collect();
        let r2 = check_permanence(&a, &scaled, &eqs, None, 0.0).unwrap();
        prop_assert_eq!(r1.holds, r2.holds);
        for ((_, v1), (_, v2)) in r1.values.iter().zip(&r2.values) {
            prop_assert!((v2 - c * v1).abs() <= 1e-12 * (1.0 + v2.abs()));
        }
    }

    #[test]
    fn paths_are_deterministic_and_follow_the_clock(
        p in replicator_params(), seed in any::<u64>(), n0 in 1u64..40,
    ) {
        let k = p.k;
        let model = ReplicatorModel::new(p).unwrap();
        let z0 = UrnState::new(vec![n0; k]);
        let stop = StopCondition::MaxSteps(2_000);
        let a = simulate(&model, &z0, &stop, seed).unwrap();
        let b = simulate(&model, &z0, &stop, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for row in 1..a.len() {
            let prev = a.population(row - 1);
            prop_assert!(prev > 0, "the chain stops at extinction");
            prop_assert_eq!(a.tau(row), a.tau(row - 1) + 1.0 / prev as f64);
        }
        let last = a.final_state();
        if last.is_extinct() {
            let x = a.frequencies(a.len() - 1);
            prop_assert!(x.iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn hypercycle_vertices_are_equilibria() {
    for k in 2..=6 {
        let model = ReplicatorModel::new(hypercycle(k, 1.0, 2.5, 4.0).unwrap()).unwrap();
        let sys = derive_system(Arc::new(model));
        for i in 0..k {
            let mut v = vec![0.0; k];
            v[i] = 1.0;
            assert!(sys.drift(&v).iter().all(|g| g.abs() < 1e-15));
        }
        let (_, _, a) = build_replicator(hypercycle(k, 1.0, 2.5, 4.0).unwrap()).unwrap();
        match interior_equilibrium(&a).unwrap() {
            InteriorEquilibrium::Positive(x) => assert!(x.iter().all(|v| (v - 1.0 / k as f64).abs() < 1e-12)),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn absorbed_chain_stays_at_zero() {
    let model = urnflow::urn::RuleModel::pure_death(3);
    let z0 = UrnState::new(vec![2, 1, 0]);
    let path = simulate(&model, &z0, &StopCondition::MaxSteps(100), 9).unwrap();
    assert!(path.final_state().is_extinct());
    assert_eq!(path.len(), 4);
    let path = simulate(&model, &UrnState::zeros(3), &StopCondition::MaxSteps(100), 9).unwrap();
    assert_eq!(path.len(), 1);
    assert_eq!(path.frequencies(0), vec![0.0; 3]);
}
