use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mbt_core::engine::{run_with, EngineConfig};
use mbt_core::generator::{gen_model, GenParams};
use mbt_core::sim::{Simulator, TimeMode};
use mbt_core::strategy::GreedyState;
use mbt_core::Iolts;

fn model(n: usize, lambda: usize) -> Arc<Iolts> {
    Arc::new(gen_model(&GenParams::new(n, lambda, 1, 2, 1)).unwrap().model)
}

/// Full coverage runs of the greedy strategy with and without sibling pruning.
fn greedy_pruning(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy-coverage");
    group.sample_size(10);
    for (n, lambda) in [(10, 6), (30, 4)] {
        let m = model(n, lambda);
        for depth in [3u32, 5] {
            for prune in [true, false] {
                let id = BenchmarkId::new(if prune { "pruned" } else { "unpruned" }, format!("N{n}-L{lambda}-d{depth}"));
                group.bench_with_input(id, &m, |b, m| {
                    b.iter(|| {
                        let cfg = EngineConfig { seed: 11, ..Default::default() };
                        let mut sim = Simulator::new(Arc::clone(m), TimeMode::Logical, 11).unwrap();
                        let mut greedy = GreedyState::new(depth).with_pruning(prune);
                        black_box(run_with(m, &mut sim, &mut greedy, &cfg).unwrap().transitions_taken)
                    })
                });
            }
        }
    }
    group.finish();
}

criterion_group!(benches, greedy_pruning);
criterion_main!(benches);
