use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use uq_core::{decompose_entropy, decompose_variance, DenseMap, MapKind, Origin, SampleStack};

fn stack(t: usize, side: usize, kind: MapKind) -> SampleStack {
    let maps = (0..t)
        .map(|k| {
            let v = (0..side * side)
                .map(|i| ((i * 31 + k * 17) % 97) as f64 / 97.0)
                .collect();
            DenseMap::from_vec(side, side, v, kind).unwrap()
        })
        .collect();
    SampleStack::new(maps, Origin::External, 0).unwrap()
}

fn bench_decompose(c: &mut Criterion) {
    let mut group = c.benchmark_group("decompose");
    for &t in &[5usize, 20] {
        let probs = stack(t, 128, MapKind::Probability);
        group.bench_with_input(BenchmarkId::new("entropy_128x128", t), &probs, |b, s| {
            b.iter(|| decompose_entropy(black_box(s)).unwrap())
        });
        let real = stack(t, 128, MapKind::Real);
        group.bench_with_input(BenchmarkId::new("variance_128x128", t), &real, |b, s| {
            b.iter(|| decompose_variance(black_box(s)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_decompose);
criterion_main!(benches);
