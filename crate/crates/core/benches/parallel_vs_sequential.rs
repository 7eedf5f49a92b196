use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rigidlab::fieldexpr::{grid_extremum, Extremum, GridBox};
use rigidlab::perturber::{local_perturbation, simulate_displacement, DisplacementParams, LocalOptions};
use rigidlab::scenarios::{cubic_model, nonlocal_cutoff};
use rigidlab::Exec;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("auto", Exec::Auto)];

fn grid_sweep(c: &mut Criterion) {
    let sc = nonlocal_cutoff().unwrap();
    let h = sc.h().unwrap();
    let grid = GridBox::uniform(&[(-1.0, 1.0); 4], 13).unwrap();
    let mut group = c.benchmark_group("grid_sweep_4d");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| grid_extremum(|p| h.eval(p), &grid, Extremum::MaxAbs, exec).unwrap())
        });
    }
    group.finish();
}

fn displacement(c: &mut Criterion) {
    let problem = cubic_model().unwrap().local_problem().unwrap();
    let opts = LocalOptions {
        find_eps0: false,
        ..LocalOptions::default()
    };
    let lp = local_perturbation(&problem, 1e-4, &opts).unwrap();
    let params = DisplacementParams::default().with_samples(200);
    let mut group = c.benchmark_group("displacement_cloud");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_displacement(&problem, &lp, &params, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, grid_sweep, displacement);
criterion_main!(benches);
