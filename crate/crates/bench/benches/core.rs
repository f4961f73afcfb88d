use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use situ_bench::{ring_store, scored_run};
use situ_core::eval::{bundled, score_trace};
use situ_core::geometry::{pixel_to_ray, ray_to_pixel, CameraModel, NormalizedPixel};
use situ_core::tools::SystemVariant;
use situ_core::view_memory::{score_views, select_best};

fn geometry(c: &mut Criterion) {
    let camera = CameraModel::new(90f64.to_radians(), 60f64.to_radians(), 640, 480).unwrap();
    let px = NormalizedPixel::new(0.31, 0.72).unwrap();
    c.bench_function("pixel_ray_round_trip", |b| {
        b.iter(|| {
            let ray = pixel_to_ray(&camera, black_box(px));
            ray_to_pixel(&camera, &ray).unwrap()
        })
    });
}

fn look_for(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_and_select");
    for n in [8, 64, 512] {
        let (store, scorer) = ring_store(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| select_best(&score_views(&store, black_box("keys"), &scorer).unwrap()))
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let (trace, annotations) = scored_run("pack_find");
    c.bench_function("score_trace", |b| b.iter(|| score_trace(black_box(&trace), &annotations).unwrap()));
}

fn scenario(c: &mut Criterion) {
    c.bench_function("run_lamp_placement", |b| {
        b.iter(|| bundled::run(black_box("lamp_placement"), SystemVariant::Full).unwrap())
    });
}

criterion_group!(benches, geometry, look_for, scoring, scenario);
criterion_main!(benches);
