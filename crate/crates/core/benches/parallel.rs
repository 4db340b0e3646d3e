use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mcma::classifiers::ClassifierKind;
use mcma::eval::{run_replicated, GeneratorTemplate, SweepAxis, SweepSpec};
use mcma::factor::{fit_ppca, make_holdout, predictive_check, PpcaConfig};
use mcma::pipeline::{Mode, PipelineConfig};
use mcma::synthgen::generate_synthetic;
use mcma::{Exec, SyntheticParams};

const STRATEGIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn predictive_check_draws(c: &mut Criterion) {
    let (ds, _) = generate_synthetic(&SyntheticParams {
        n: 1000,
        d: 10,
        w_u: 2.0,
        seed: 1,
    })
    .unwrap();
    let mask = make_holdout(ds.n(), ds.d(), 0.2, 2).unwrap();
    let model = fit_ppca(&ds.bias, 1, &PpcaConfig::default()).unwrap().model;
    let mut group = c.benchmark_group("predictive_check");
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| predictive_check(&model, &ds.bias, &mask, black_box(200), 3, exec).unwrap())
        });
    }
    group.finish();
}

fn replicated_sweep(c: &mut Criterion) {
    let spec = SweepSpec {
        axis: SweepAxis::Wu,
        values: vec![0.0, 1.0, 2.0],
        template: GeneratorTemplate::Synthetic(SyntheticParams {
            n: 300,
            d: 10,
            w_u: 0.0,
            seed: 0,
        }),
        kinds: vec![ClassifierKind::MnLogit, ClassifierKind::GaussianNb],
        modes: vec![Mode::Basic, Mode::Mcma],
        pipeline: PipelineConfig {
            force: true,
            check_replications: 50,
            ..Default::default()
        },
        averaging: Default::default(),
        test_fraction: 0.2,
    };
    let mut group = c.benchmark_group("run_replicated");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_replicated(&spec, black_box(4), 0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, predictive_check_draws, replicated_sweep);
criterion_main!(benches);
