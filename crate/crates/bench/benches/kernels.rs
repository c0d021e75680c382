use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hybrid_mcmc::model::{ForwardModel, ModelPotential, ParameterQoi};
use hybrid_mcmc::sampler::{run_chain, ChainConfig, Kernel};
use hybrid_mcmc::surrogate::MlpModel;
use hybrid_mcmc_bench::{experiment_data, experiment_model, uniform_prior};

fn fem_solve(c: &mut Criterion) {
    let z = uniform_prior().parameter(vec![0.5]).unwrap();
    let mut g = c.benchmark_group("forward_solve");
    for level in [3, 5, 7, 8] {
        let model = experiment_model(level);
        g.bench_with_input(BenchmarkId::from_parameter(level), &model, |b, m| {
            b.iter(|| m.evaluate(black_box(&z)).unwrap())
        });
    }
    g.finish();
}

fn mlp_predict(c: &mut Criterion) {
    let mut g = c.benchmark_group("mlp_predict");
    for width in [16, 64, 512] {
        let model = MlpModel::new(&[1, width, width, 36], 1).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(width), &model, |b, m| {
            b.iter(|| m.predict(black_box(&[0.4])).unwrap())
        });
    }
    g.finish();
}

fn chain(c: &mut Criterion) {
    let model = experiment_model(4);
    let obs = experiment_data(&model);
    let target = ModelPotential::new(&model, &obs);
    let prior = uniform_prior();
    let cfg = ChainConfig::new(Kernel::RwReflect { step: 0.1 }, 200, 3);
    c.bench_function("chain_level4_200", |b| {
        b.iter(|| run_chain(&target, &prior, &cfg, &ParameterQoi { dim: 1 }).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = fem_solve, mlp_predict, chain
}
criterion_main!(benches);
