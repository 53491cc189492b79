use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use noisecalc::parallel::{map_indexed, Execution};
use noisecalc::paths::{generate_brownian, SeedSpec, TimeGrid};
use noisecalc::physics::{kinetic_models, rest_start_diagnostics_with, LangevinParams};
use noisecalc::integrals::hk_integral;
use noisecalc::solvers::{simulate_ensemble_with, McConfig, Recording, SolverScheme};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn ensemble(c: &mut Criterion) {
    let trio = kinetic_models(&LangevinParams::with_kinetic_energy(1.0, 1.0, 1.0, 0.5).unwrap()).unwrap();
    let cfg = McConfig::new(512, 1e-3, 1.0, SeedSpec::new(1, 0)).with_recording(Recording::Endpoints);
    let mut group = c.benchmark_group("ito_kinetic_ensemble");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_ensemble_with(&trio.ito, SolverScheme::EulerMaruyamaOnItoForm, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn rest_start(c: &mut Criterion) {
    let trio = kinetic_models(&LangevinParams::default()).unwrap();
    let mut group = c.benchmark_group("rest_start_diagnostics");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| rest_start_diagnostics_with(&trio, 1e-3, 200, 2, exec).unwrap())
        });
    }
    group.finish();
}

fn hk_tables(c: &mut Criterion) {
    let grid = TimeGrid::uniform(0.0, 1.0, 1 << 8).unwrap();
    let mut group = c.benchmark_group("hk_integral_seed_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                map_indexed(64, exec, |s| {
                    let w = generate_brownian(&grid, SeedSpec::new(3, s as u64));
                    hk_integral(|x| x * x, &w, 6, SeedSpec::new(4, s as u64)).unwrap().extrapolated
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, ensemble, rest_start, hk_tables);
criterion_main!(benches);
