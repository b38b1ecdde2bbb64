use std::hint::black_box;

use cbn_core::fourier::{DftPlan, Grid};
use cbn_core::linalg::{frequency_svd, ConvFilter};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn filter(grid: Grid, c: usize) -> ConvFilter {
    ConvFilter::from_fn(grid, c, c, |j, k, s| ((j * 7 + k * 3 + s) as f64 * 0.37).sin())
}

fn bench_svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("frequency_svd");
    for (n, ch) in [(16, 4), (64, 8), (256, 16)] {
        let f = filter(Grid::line(n), ch);
        group.bench_with_input(BenchmarkId::from_parameter(format!("n{n}_c{ch}")), &f, |b, f| {
            b.iter(|| frequency_svd(black_box(f)))
        });
    }
    let f = filter(Grid::square(12), 8);
    group.bench_function("12x12_c8", |b| b.iter(|| frequency_svd(black_box(&f))));
    group.finish();
}

fn bench_dft(c: &mut Criterion) {
    let mut group = c.benchmark_group("dft");
    for grid in [Grid::line(64), Grid::line(60), Grid::square(28)] {
        let plan = DftPlan::new(grid);
        let x: Vec<f64> = (0..grid.pixels()).map(|i| (i as f64).cos()).collect();
        group.bench_function(format!("side{}_d{}", grid.side(), grid.dims()), |b| b.iter(|| plan.forward_real(black_box(&x))));
    }
    group.finish();
}

criterion_group!(benches, bench_svd, bench_dft);
criterion_main!(benches);
