use criterion::{criterion_group, criterion_main, Criterion};
use openevt::{EvmConfig, EvmModel, GevcConfig, GevcModel, GpdcConfig, GpdcModel};
use openevt_bench::{labelled_cubes, queries};
use std::hint::black_box;

fn fit(c: &mut Criterion) {
    let data = labelled_cubes(3, 1_000, 2, 1);
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("gpdc_jackknife_3000", |b| {
        b.iter(|| GpdcModel::fit(black_box(&data), &GpdcConfig::default()).unwrap())
    });
    group.bench_function("gevc_3000", |b| {
        b.iter(|| GevcModel::fit(black_box(&data), &GevcConfig::default()).unwrap())
    });
    group.bench_function("evm_3000", |b| {
        b.iter(|| EvmModel::fit(black_box(&data), &EvmConfig::default()).unwrap())
    });
    group.finish();
}

fn score(c: &mut Criterion) {
    let data = labelled_cubes(3, 1_000, 2, 1);
    let qs = queries(100, 2, 2);
    let gpdc = GpdcModel::fit(&data, &GpdcConfig::default()).unwrap();
    let gevc = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
    let evm = EvmModel::fit(&data, &EvmConfig::default()).unwrap();
    let mut group = c.benchmark_group("score_100");
    group.bench_function("gpdc", |b| b.iter(|| qs.iter().map(|q| gpdc.score(q).unwrap().1).count()));
    group.bench_function("gevc", |b| b.iter(|| qs.iter().map(|q| gevc.score(q).unwrap().1).sum::<f64>()));
    group.bench_function("evm_psi", |b| b.iter(|| qs.iter().map(|q| evm.psi(q).unwrap()).sum::<f64>()));
    group.finish();
}

criterion_group!(benches, fit, score);
criterion_main!(benches);
