use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use trl_core::correlation::{correlation_exact, ObservableSpec};
use trl_core::rational::rat;
use trl_core::recurrence::Problem;
use trl_core::{MapSystem, MeasureModel, TargetSchedule, TwistSpec};

fn problem(twist: TwistSpec) -> Problem {
    Problem::new(
        MapSystem::doubling(),
        MeasureModel::lebesgue(),
        TargetSchedule::harmonic(rat(1, 1)),
        twist,
    )
}

fn rn_mass(c: &mut Criterion) {
    let mut group = c.benchmark_group("rn_mass_exact");
    for twist in [TwistSpec::identity(), TwistSpec::abs_tent()] {
        let p = problem(twist.clone());
        for n in [10, 40] {
            group.bench_with_input(BenchmarkId::new(twist.name.clone(), n), &n, |b, &n| {
                b.iter(|| p.measure_rn_exact(black_box(n)).unwrap())
            });
        }
    }
    group.finish();
}

fn pairwise(c: &mut Criterion) {
    let p = problem(TwistSpec::identity());
    c.bench_function("pairwise_exact/identity/8+8", |b| {
        b.iter(|| p.pairwise_exact(black_box(8), black_box(8)).unwrap())
    });
    let constant = problem(TwistSpec::constant(rat(1, 3)).unwrap());
    c.bench_function("pairwise_exact/constant/30+30", |b| {
        b.iter(|| {
            constant
                .pairwise_exact(black_box(30), black_box(30))
                .unwrap()
        })
    });
}

fn scan(c: &mut Criterion) {
    let p = problem(TwistSpec::identity());
    let mut group = c.benchmark_group("scan");
    group.sample_size(10);
    group.bench_function("doubling/N=40/2000", |b| {
        b.iter(|| p.scan(40, 2000, black_box(7)).unwrap())
    });
    group.finish();
}

fn correlation(c: &mut Criterion) {
    let f = ObservableSpec::indicator(rat(0, 1), rat(1, 3)).unwrap();
    let doubling = MapSystem::doubling();
    c.bench_function("correlation_exact/doubling/n=12", |b| {
        b.iter(|| correlation_exact(&doubling, &f, &f, black_box(12)).unwrap())
    });
}

criterion_group!(benches, rn_mass, pairwise, scan, correlation);
criterion_main!(benches);
