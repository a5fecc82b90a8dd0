use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlp_core::{
    derive_stream, eval_at_origin, exact_draw_count, picard_quadrature, DrawCounter, IndexPath, MasterSeed, McSequence,
    ProblemSpec, QuadratureGrid,
};

fn streams(c: &mut Criterion) {
    let seed = MasterSeed::from_u64(1);
    let path = IndexPath::from_slice(&[1, 2, -3, 4, 5, 6]);
    c.bench_function("derive_stream", |b| {
        b.iter(|| derive_stream(black_box(&seed), black_box(&path)))
    });
    c.bench_function("normals_x1000", |b| {
        let mut s = derive_stream(&seed, &path);
        let mut ledger = DrawCounter::default();
        let mut buf = vec![0.0; 1000];
        b.iter(|| s.fill_normals(black_box(&mut buf), &mut ledger))
    });
}

fn scheme(c: &mut Criterion) {
    let seq = McSequence::identity();
    let mut group = c.benchmark_group("eval_mlp");
    group.sample_size(10);
    for (name, spec) in [
        ("quadratic_d10", ProblemSpec::quadratic(10)),
        ("sine_d1", ProblemSpec::sine(1)),
    ] {
        let problem = spec.build().unwrap();
        for n in [2i64, 3, 4] {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                let seed = MasterSeed::from_u64(7);
                b.iter(|| {
                    let mut ledger = DrawCounter::default();
                    eval_at_origin(&problem, &seq, n, &seed, &mut ledger).unwrap()
                })
            });
        }
    }
    group.finish();
    c.bench_function("exact_draw_count_n6", |b| {
        b.iter(|| exact_draw_count(black_box(10), &seq, black_box(6), 6).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let problem = ProblemSpec::sine(1).build().unwrap();
    let grid = QuadratureGrid {
        n_t: 17,
        n_x: 129,
        iters: 4,
        ..Default::default()
    };
    let mut group = c.benchmark_group("quadrature");
    group.sample_size(10);
    group.bench_function("sine_coarse", |b| b.iter(|| picard_quadrature(&problem, grid).unwrap()));
    group.finish();
}

criterion_group!(benches, streams, scheme, oracle);
criterion_main!(benches);
