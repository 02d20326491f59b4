use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multiflat::kernels::{BumpKind, KernelSpec, Layering};
use multiflat::{alpha, bl_distance, build_lattice, layer_field, AlphaOptions};
use multiflat_bench::{segment, sine_graph, transport_pair};
use std::hint::black_box;

fn bl(c: &mut Criterion) {
    let mut g = c.benchmark_group("bl_distance");
    for n in [30, 120, 480] {
        let (a, b, ball) = transport_pair(n, 0.3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| bl_distance(black_box(&a), black_box(&b), &ball, 4096).unwrap().value)
        });
    }
    g.finish();
}

fn layers(c: &mut Criterion) {
    let mut g = c.benchmark_group("layer_field");
    g.sample_size(20);
    let lay = Layering::new(BumpKind::CzoRadial, 1.0).unwrap();
    let k = KernelSpec::riesz(1, 1);
    for n in [1024, 4096] {
        let m = segment(n);
        for j in [0, 3] {
            g.bench_with_input(BenchmarkId::new(format!("N{n}"), j), &j, |bench, &j| {
                bench.iter(|| layer_field(black_box(&m), &k, &lay, j).unwrap())
            });
        }
    }
    g.finish();
}

fn alpha_cube(c: &mut Criterion) {
    let mut g = c.benchmark_group("alpha");
    g.sample_size(10);
    let l = build_lattice(&sine_graph(1024, 0.5), 4).unwrap();
    let opts = AlphaOptions::default();
    for q in [1usize, l.generation(3)[2]] {
        g.bench_with_input(BenchmarkId::new("cube", q), &q, |bench, &q| bench.iter(|| alpha(&l, q, &opts).unwrap().alpha));
    }
    g.finish();
}

criterion_group!(benches, bl, layers, alpha_cube);
criterion_main!(benches);
