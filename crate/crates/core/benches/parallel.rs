//! Sequential against rayon execution on the two data-parallel hot loops.
//! Build with `--no-default-features` to confirm both arms then run alike.

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use einsel_core::exec::Execution;
use einsel_core::hilbert::{cat_state, ModelParams, TruncatedBasis, C64};
use einsel_core::phase_space::{wigner_with, GridSpec};
use einsel_core::trajectories::average_trajectories;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn trajectory_ensemble(c: &mut Criterion) {
    let params = ModelParams::new(0.0, 1.0, 1.0).unwrap();
    let psi = cat_state(C64::new(2.0, 0.0), PI, TruncatedBasis::new(30).unwrap()).unwrap();
    let mut group = c.benchmark_group("trajectory_ensemble_2000");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| average_trajectories(black_box(&psi), &params, 1.0, 2000, 7, exec).unwrap())
        });
    }
    group.finish();
}

fn wigner_raster(c: &mut Criterion) {
    let rho = cat_state(C64::new(3.0, 0.0), PI, TruncatedBasis::new(40).unwrap()).unwrap().to_density();
    let spec = GridSpec::square(7.0, 121).unwrap();
    let mut group = c.benchmark_group("wigner_raster_121");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| wigner_with(black_box(&rho), &spec, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trajectory_ensemble, wigner_raster);
criterion_main!(benches);
