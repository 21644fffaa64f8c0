use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use uq_core::calib::{binned_report, slic_superpixels, BinningMode, PatchStats, DEFAULT_BINS};
use uq_core::{DenseMap, MapKind};

fn image(side: usize) -> DenseMap {
    let v = (0..side * side)
        .map(|i| {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            0.5 + 0.5 * (r / 7.0).sin() * (c / 5.0).cos()
        })
        .collect();
    DenseMap::from_vec(side, side, v, MapKind::Real).unwrap()
}

fn bench_slic(c: &mut Criterion) {
    let mut group = c.benchmark_group("slic");
    group.sample_size(20);
    for &side in &[64usize, 128] {
        let img = image(side);
        group.bench_with_input(BenchmarkId::new("segments_200", side), &img, |b, img| {
            b.iter(|| slic_superpixels(black_box(img), 200, 10.0, 10, 0).unwrap())
        });
    }
    group.finish();
}

fn bench_binned_report(c: &mut Criterion) {
    let k = 10_000;
    let acc = (0..k).map(|i| (i % 101) as f64 / 100.0).collect();
    let unc = (0..k).map(|i| (i * 37 % 103) as f64 / 102.0).collect();
    let stats = PatchStats::new(acc, unc).unwrap();
    c.bench_function("binned_report_10k_patches", |b| {
        b.iter(|| binned_report(black_box(&stats), 0.5, BinningMode::UncertaintyOnly, DEFAULT_BINS).unwrap())
    });
}

criterion_group!(benches, bench_slic, bench_binned_report);
criterion_main!(benches);
