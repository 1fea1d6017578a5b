use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use score_core::submodcheck::{self, DrawDomain, SearchParams};
use score_core::{LossConfig, Objective};

fn exhaustive(c: &mut Criterion) {
    let mut group = c.benchmark_group("exhaustive_dr_check");
    let cfg = LossConfig::new(Objective::Fl);
    for n in [6, 8, 10] {
        let b = submodcheck::draw_batch(n, submodcheck::DRAW_DIM, DrawDomain::NonNegative, score_bench::SEED);
        for objective in [Objective::Fl, Objective::GcCf, Objective::LogDetSf] {
            group.bench_with_input(BenchmarkId::new(objective.name(), n), &b, |bench, b| {
                bench.iter(|| submodcheck::exhaustive_dr_check(objective, black_box(b), &cfg, 1e-9).unwrap())
            });
        }
    }
    group.finish();
}

fn consistency(c: &mut Criterion) {
    let cfg = LossConfig::new(Objective::GcCf);
    let params = SearchParams::new(6, 200, score_bench::SEED);
    c.bench_function("consistency_run/gc-cf/200", |bench| {
        bench.iter(|| submodcheck::consistency_run(Objective::GcCf, &cfg, black_box(&params)).unwrap())
    });
}

criterion_group!(benches, exhaustive, consistency);
criterion_main!(benches);
