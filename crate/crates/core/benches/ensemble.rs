use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use urnflow::ensemble::{run_ensemble, EnsembleConfig};
use urnflow::models::{build_replicator, hypercycle};
use urnflow::par::Execution;
use urnflow::urn::{StopCondition, UrnState};

fn ensemble(c: &mut Criterion) {
    let (model, _, _) = build_replicator(hypercycle(5, 1.0, 2.5, 4.0).unwrap()).unwrap();
    let cfg = EnsembleConfig {
        replicates: 64,
        master_seed: 2024,
        z0: UrnState::new(vec![20; 5]),
        stop: StopCondition::MaxSteps(200_000),
        survival_threshold: 10_000,
        attractor: None,
        distance_checkpoints: vec![1_000, 10_000],
    };
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);

    let mut group = c.benchmark_group("fig1_ensemble_64");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { jobs: threads }),
    ] {
        group.bench_with_input(BenchmarkId::new(name, threads), &exec, |b, &exec| {
            b.iter(|| run_ensemble(model.as_ref(), &cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
