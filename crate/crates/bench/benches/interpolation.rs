use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use tdflio_bench::{cube_grid, default_kernel, random_cloud};

fn interpolation(c: &mut Criterion) {
    let mut grid = cube_grid(1_000_000);
    grid.insert_cloud(&default_kernel(), &random_cloud(5_000, 2.0, 1));
    let queries = random_cloud(10_000, 2.0, 2);
    let mut group = c.benchmark_group("interpolation");
    group.throughput(Throughput::Elements(queries.len() as u64));
    group.bench_function("distance_and_gradient", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(grid.distance_and_gradient_at(q));
            }
        })
    });
    group.bench_function("distance", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(grid.distance_at(q));
            }
        })
    });
    group.finish();
}

criterion_group!(benches, interpolation);
criterion_main!(benches);
