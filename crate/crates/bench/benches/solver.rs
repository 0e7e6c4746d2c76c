use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rental_core::optimizer::budget_grid;
use rental_core::{
    brute_force_allocation, inner_minimize, pareto_frontier, solve_allocation, JobType, SizeDist,
    SolverConfig, SpeedupFunction, WorkloadSpec,
};
use std::hint::black_box;

fn spec(types: usize, budget_factor: f64) -> WorkloadSpec {
    let types: Vec<JobType> = (0..types)
        .map(|i| {
            let speedup = if i % 2 == 0 {
                SpeedupFunction::amdahl(0.5 + 0.45 * (i as f64 / types as f64)).unwrap()
            } else {
                SpeedupFunction::power_law(0.3 + 0.1 * (i % 6) as f64).unwrap()
            };
            JobType::new(
                format!("t{i}"),
                speedup,
                0.4,
                SizeDist::Exponential { mean: 1.0 },
            )
        })
        .collect();
    let load: f64 = types.iter().map(JobType::load).sum();
    WorkloadSpec::new(types, load * budget_factor).unwrap()
}

fn inner(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let table = SpeedupFunction::tabular(vec![
        (1.0, 1.0),
        (2.0, 1.8),
        (4.0, 3.0),
        (8.0, 4.4),
        (64.0, 7.0),
    ])
    .unwrap();
    let mut group = c.benchmark_group("inner_minimize");
    for (name, f) in [
        ("amdahl", SpeedupFunction::amdahl(0.9).unwrap()),
        ("power", SpeedupFunction::power_law(0.5).unwrap()),
        ("tabular", table),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| inner_minimize(black_box(&f), black_box(0.01), &cfg))
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("solve_allocation");
    for m in [1, 4, 16, 64] {
        let s = spec(m, 2.5);
        group.bench_with_input(BenchmarkId::from_parameter(m), &s, |b, s| {
            b.iter(|| solve_allocation(black_box(s), &cfg).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("brute_force");
    group.sample_size(10);
    let s = spec(2, 2.5);
    for step in [1e-2, 1e-3] {
        group.bench_with_input(BenchmarkId::from_parameter(step), &step, |b, &step| {
            b.iter(|| brute_force_allocation(&s, step, 1024.0).unwrap())
        });
    }
    group.finish();
}

fn frontier(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let s = spec(8, 2.0);
    let budgets = budget_grid(s.total_load() * 1.05, s.total_load() * 5.0, 100);
    c.bench_function("pareto_frontier/100", |b| {
        b.iter(|| pareto_frontier(&s, &budgets, &cfg))
    });
}

criterion_group!(benches, inner, solve, oracle, frontier);
criterion_main!(benches);
