use bandframe::bloch::{band_projection_field, compute_bands, detect_isolated_family};
use bandframe::model::{qwz, ReciprocalGrid};
use bandframe::phases::MagneticSetup;
use bandframe::pipeline::{magnetic_point, prepare, PipelineConfig};
use bandframe::reduction::{hs_scalar, PlateauBump};
use bandframe::validate::butterfly_sweep;
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use std::f64::consts::PI;

fn bands(c: &mut Criterion) {
    let h = qwz(-1.0, 5.0);
    let grid = ReciprocalGrid::new(2, 32).unwrap();
    c.bench_function("qwz bands and projection field, 32x32", |b| {
        b.iter(|| {
            let bands = compute_bands(&h, &grid);
            let fam = detect_isolated_family(&bands, 1, 0, 1e-6).unwrap();
            black_box(band_projection_field(&bands, &fam).unwrap())
        })
    });
}

fn pipeline(c: &mut Criterion) {
    let cfg = PipelineConfig::new(qwz(-1.0, 5.0), 16);
    c.bench_function("prepare qwz, L = 16", |b| b.iter(|| black_box(prepare(&cfg).unwrap())));
    let prep = prepare(&cfg).unwrap();
    let mut g = c.benchmark_group("magnetic point");
    g.sample_size(10);
    g.bench_function("qwz, L = 16, flux 2 pi / 16", |b| {
        b.iter(|| black_box(magnetic_point(&prep, MagneticSetup::planar_flux(2.0 * PI / 16.0)).unwrap()))
    });
    g.finish();
}

fn calculus(c: &mut Criterion) {
    let f = PlateauBump::new(3.5, 4.5, 0.4);
    c.bench_function("almost-analytic scalar, order 3", |b| b.iter(|| black_box(hs_scalar(&f, 3, black_box(3.7)))));
}

fn butterfly(c: &mut Criterion) {
    let m = bandframe::validate::HarperSymbol { e0: 5.0, t1: 1.0, t2: 1.0 }.to_sequence();
    let fluxes: Vec<(i64, usize)> = vec![(1, 4), (3, 4)];
    c.bench_function("harper spectra at q = 4, L = 16", |b| b.iter(|| black_box(butterfly_sweep(&m, &fluxes, 16).unwrap())));
}

criterion_group!(benches, bands, pipeline, calculus, butterfly);
criterion_main!(benches);
