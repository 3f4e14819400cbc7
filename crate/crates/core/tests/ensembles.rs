use urnflow::ensemble::{establishment_probability, extinction_probability, run_ensemble, write_csv, EnsembleConfig};
use urnflow::models::{build_replicator, hypercycle};
use urnflow::par::Execution;
use urnflow::urn::{MoveVector, RuleModel, StopCondition, TransitionRule, UrnModel, UrnState};

fn config(z0: Vec<u64>, replicates: usize, threshold: u64, steps: u64) -> EnsembleConfig {
    EnsembleConfig {
        replicates,
        master_seed: 11,
        z0: UrnState::new(z0),
        stop: StopCondition::MaxSteps(steps),
        survival_threshold: threshold,
        attractor: None,
        distance_checkpoints: vec![100, 1000],
    }
}

fn csv(model: &dyn UrnModel, cfg: &EnsembleConfig, exec: Execution) -> Vec<u8> {
    let result = run_ensemble(model, cfg, exec).unwrap();
    let mut out = Vec::new();
    write_csv(&result, &mut out).unwrap();
    out
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (model, _, _) = build_replicator(hypercycle(5, 1.0, 2.5, 4.0).unwrap()).unwrap();
    let cfg = config(vec![20; 5], 40, 2_000, 50_000);
    let reference = csv(model.as_ref(), &cfg, Execution::Sequential);
    for jobs in [4, 16] {
        assert_eq!(
            reference,
            csv(model.as_ref(), &cfg, Execution::with_jobs(jobs)),
            "{jobs} jobs"
        );
    }
}

#[test]
fn controls_are_exact() {
    let death = RuleModel::pure_death(2);
    let r = run_ensemble(&death, &config(vec![3, 4], 50, 100, 10_000), Execution::Sequential).unwrap();
    assert_eq!(establishment_probability(&r).point, 0.0);
    assert_eq!(extinction_probability(&r).point, 1.0);

    let birth = RuleModel::pure_birth(1);
    let r = run_ensemble(&birth, &config(vec![1], 50, 100, 10_000), Execution::Sequential).unwrap();
    let est = establishment_probability(&r);
    assert_eq!(est.point, 1.0);
    assert_eq!(est.upper, 1.0);
}

#[test]
fn established_runs_have_flat_inverse_power_sums() {
    // Births at rate 0.6, deaths at 0.4, both proportional to frequency.
    let rules = (0..2)
        .flat_map(|i| {
            [
                TransitionRule::new(MoveVector::unit(2, i, 1), move |x: &[f64]| 0.6 * x[i]),
                TransitionRule::new(MoveVector::unit(2, i, -1), move |x: &[f64]| 0.4 * x[i]),
            ]
        })
        .collect();
    let model = RuleModel::new(2, 1, rules).unwrap();
    let r = run_ensemble(
        &model,
        &config(vec![5, 5], 40, 10_000, 1_000_000),
        Execution::Sequential,
    )
    .unwrap();
    let established: Vec<_> = r.established().collect();
    assert!(established.len() > 30);
    for s in established {
        assert!(
            s.tail_fraction15() < 0.01,
            "replicate {}: {}",
            s.replicate,
            s.tail_fraction15()
        );
        assert!(s.sum_inv_pow2 < s.sum_inv_pow15);
    }
}
