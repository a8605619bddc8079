use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nvmag::fit;
use nvmag::maps::{self, MapOptions, PixelRect};
use nvmag::stray;
use nvmag::synth::{build_schedule, synth_cube, ScheduleParams, ShotNoise, SynthConfig};
use nvmag::{Execution, FieldVector};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];
const BIAS: FieldVector = FieldVector::new(4.1e-3, 0.72e-3, 1.1e-3);

fn field_map(c: &mut Criterion) {
    let scene = stray::default_cross_scene(1).unwrap().resampled(32, 32);
    let mut g = c.benchmark_group("field_map_32");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| stray::field_map(black_box(&scene), exec).unwrap())
        });
    }
    g.finish();
}

fn synthesis(c: &mut Criterion) {
    let scene = stray::default_cross_scene(1).unwrap().resampled(64, 64);
    let fm = stray::field_map(&scene, Execution::Parallel).unwrap();
    let schedule = build_schedule(&ScheduleParams::default()).unwrap();
    let mut g = c.benchmark_group("synth_cube_64");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SynthConfig {
            exec,
            ..SynthConfig::new(ShotNoise::shot(1e4, 1))
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| synth_cube(black_box(&fm), BIAS, &schedule, &cfg).unwrap())
        });
    }
    g.finish();
}

fn smoothing_and_fitting(c: &mut Criterion) {
    let scene = stray::default_cross_scene(1).unwrap().resampled(32, 32);
    let fm = stray::field_map(&scene, Execution::Parallel).unwrap();
    let schedule = build_schedule(&ScheduleParams::default()).unwrap();
    let cube = synth_cube(&fm, BIAS, &schedule, &SynthConfig::new(ShotNoise::shot(1e4, 2))).unwrap();
    let averaged = fit::moving_average_3x3(&cube, Execution::Parallel).unwrap();
    let calib = maps::calibrate_bias(&averaged, PixelRect::new(0, 0, 10, 10), &Default::default()).unwrap();

    let mut g = c.benchmark_group("moving_average_32");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit::moving_average_3x3(black_box(&cube), exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("frequency_maps_32");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = MapOptions {
            exec,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| maps::frequency_maps(black_box(&averaged), &calib, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, field_map, synthesis, smoothing_and_fitting);
criterion_main!(benches);
