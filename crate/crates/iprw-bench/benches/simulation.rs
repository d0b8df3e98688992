//! Monte Carlo kernels: tree simulation and limit-process sampling.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use iprw_core::branching::{simulate_generations, SimLimits};
use iprw_core::gaussian::{integrate_rl, sample_bm};
use iprw_core::seeds::replicate_rng;
use iprw_core::step_models::{JointStepModel, StepLaw};

fn bench_tree(c: &mut Criterion) {
    let model = JointStepModel::Equal {
        xi: StepLaw::Exponential { rate: 1.0 },
    };
    let limits = SimLimits::default();
    let mut group = c.benchmark_group("simulate_generations");
    for t in [20.0f64, 50.0] {
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            let mut rng = replicate_rng(0, 0);
            b.iter(|| {
                simulate_generations(black_box(&model), t, 2, &[1.0], &mut rng, &limits)
                    .unwrap()
            });
        });
    }
    group.finish();
}

fn bench_quantile_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_step");
    for (name, model) in [
        (
            "equal_exponential",
            JointStepModel::Equal { xi: StepLaw::Exponential { rate: 1.0 } },
        ),
        (
            "comonotone_gamma_pareto",
            JointStepModel::Comonotone {
                xi: StepLaw::Gamma { shape: 2.0, rate: 1.0 },
                eta: StepLaw::Pareto { alpha: 1.5, scale: 1.0 },
            },
        ),
    ] {
        group.bench_function(name, |b| {
            let mut rng = replicate_rng(0, 1);
            b.iter(|| black_box(model.sample_step(&mut rng)));
        });
    }
    group.finish();
}

fn bench_limit_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("limit_paths");
    group.sample_size(10);
    group.bench_function("bm_1000x1000", |b| {
        b.iter(|| sample_bm(1e-3, 1.0, 1000, black_box(3)));
    });
    let bm = sample_bm(1e-3, 1.0, 1000, 3);
    group.bench_function("integrate_rl_q2", |b| {
        b.iter(|| integrate_rl(black_box(&bm), 2));
    });
    group.finish();
}

criterion_group!(benches, bench_tree, bench_quantile_sampling, bench_limit_paths);
criterion_main!(benches);
