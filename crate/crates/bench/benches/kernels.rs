use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use harvest_core::entanglement::{assemble_pt, peres_test};
use harvest_core::kernels::{
    amplitudes, emission_norm2, exchange_amplitude, reduced_kernel, FieldModel, GeometrySpec, KernelOptions,
};
use harvest_core::windows::{synthesize_superosc, OscTarget, WindowProfile};
use harvest_core::{AmplitudeSet, Complex64};

fn bench_kernel(c: &mut Criterion) {
    c.bench_function("dirac reduced kernel", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for i in 0..1000 {
                s += reduced_kernel(FieldModel::DiracRight, black_box(i as f64 * 0.01), 5.0);
            }
            s
        })
    });
}

fn bench_windows(c: &mut Criterion) {
    let comb = synthesize_superosc(5.0, 1.0, 20, 0.005, 0.0, 1.0, OscTarget::Cos).unwrap().window;
    c.bench_function("comb transform", |b| b.iter(|| comb.eval_transform(black_box(0.37))));
}

fn bench_amplitudes(c: &mut Criterion) {
    let g = GeometrySpec::new(5.0, 1.0);
    let w = WindowProfile::gaussian(1.0, 1.0);
    let (da, db) = g.place(w, 2.0, w, 2.0);
    let opts = KernelOptions::default();
    c.bench_function("gaussian emission", |b| {
        b.iter(|| emission_norm2(black_box(&da), FieldModel::DiracRight, &opts).unwrap())
    });
    c.bench_function("gaussian exchange", |b| {
        b.iter(|| exchange_amplitude(black_box(&da), &db, &g, FieldModel::DiracRight, &opts).unwrap())
    });
    let both = opts.both_paths();
    let mut group = c.benchmark_group("dual path");
    group.sample_size(10);
    group.bench_function("gaussian amplitudes", |b| {
        b.iter(|| amplitudes(black_box(&da), &db, &g, FieldModel::DiracRight, &both).unwrap())
    });
    group.finish();
}

fn bench_peres(c: &mut Criterion) {
    let a = AmplitudeSet::new(0.01, 0.02, Complex64::new(0.02, 0.001), Complex64::new(0.003, 0.0));
    c.bench_function("peres test", |b| b.iter(|| peres_test(&assemble_pt(black_box(&a)).unwrap())));
}

criterion_group!(benches, bench_kernel, bench_windows, bench_amplitudes, bench_peres);
criterion_main!(benches);
