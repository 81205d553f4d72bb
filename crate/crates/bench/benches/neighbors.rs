use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use openevt::{DistanceMetric, NeighborIndex};
use openevt_bench::{queries, uniform_cloud};
use std::hint::black_box;

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    for (n, dim) in [(10_000, 2), (10_000, 8), (10_000, 32)] {
        let data = uniform_cloud(n, dim, 1);
        let index = NeighborIndex::from_dataset(&data, DistanceMetric::Euclidean).unwrap();
        let qs = queries(64, dim, 2);
        for k in [1usize, 26] {
            group.bench_with_input(BenchmarkId::new(format!("n{n}_p{dim}"), k), &k, |b, &k| {
                b.iter(|| {
                    for q in &qs {
                        black_box(index.k_smallest_distances(q, k).unwrap());
                    }
                })
            });
        }
    }
    group.finish();
}

fn insert(c: &mut Criterion) {
    let data = uniform_cloud(5_000, 3, 3);
    let extra = queries(200, 3, 4);
    c.bench_function("insert_200_tracking_nearest", |b| {
        b.iter_batched(
            || {
                let mut index = NeighborIndex::from_dataset(&data, DistanceMetric::Euclidean).unwrap();
                index.track_nearest().unwrap();
                index
            },
            |mut index| {
                for x in &extra {
                    black_box(index.insert(x).unwrap());
                }
            },
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, knn, insert);
criterion_main!(benches);
