//! Criterion benchmarks for the hot kernels: spectral functions, Green
//! kernels, single walks and the transfer-operator build.

use std::hint::black_box;

use criterion::Criterion;
use levygreen::cubature::CubatureConfig;
use levygreen::duhamel::{DuhamelConfig, TransferOperator};
use levygreen::kernels::{kappa_pair, DriftField, ExactBallGreen, GreenKernel, SharpGreen};
use levygreen::rng::stream;
use levygreen::simulate::{EulerWalker, SphereTime, WosWalker};
use levygreen::{CellGrid, Domain, ProcessSpec};

pub fn spectral(c: &mut Criterion) {
    let stable = ProcessSpec::stable(1.5, 2).unwrap();
    let rel = levygreen::spectral::make_process(
        "relativistic-stable",
        &levygreen::spectral::ProcessParams { alpha: 1.5, mass: Some(1.0), ..Default::default() },
        2,
    )
    .unwrap();
    c.bench_function("h stable", |b| b.iter(|| stable.h(black_box(0.37))));
    c.bench_function("h relativistic", |b| b.iter(|| rel.h(black_box(0.37))));
    c.bench_function("psi relativistic", |b| b.iter(|| rel.psi(black_box(2.7))));
}

pub fn kernels(c: &mut Criterion) {
    let spec = ProcessSpec::stable(1.5, 2).unwrap();
    let dom = Domain::centered_ball(2, 1.0).unwrap();
    let exact = ExactBallGreen::for_spec(&spec, &dom).unwrap();
    let sharp = SharpGreen::new(&spec, &dom).unwrap();
    let (x, y) = ([0.3, -0.2], [-0.5, 0.6]);
    c.bench_function("green exact", |b| b.iter(|| exact.green(black_box(&x), black_box(&y))));
    c.bench_function("green sharp", |b| b.iter(|| sharp.green(black_box(&x), black_box(&y))));
    let mut g = [0.0; 2];
    c.bench_function("grad exact", |b| b.iter(|| exact.grad_x(black_box(&x), black_box(&y), &mut g)));
    let drift = DriftField::constant(vec![1.0, 0.0]).unwrap();
    let cfg = CubatureConfig { rel_tol: 1e-4, ..CubatureConfig::for_alpha(1.5) };
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("kappa pair", |b| b.iter(|| kappa_pair(&exact, &drift, &x, &y, cfg).unwrap()));
    let small = Domain::centered_ball(2, 0.5).unwrap();
    let k = ExactBallGreen::for_spec(&spec, &small).unwrap();
    let cells = CellGrid::new(&small, 0.125).unwrap();
    group.bench_function("transfer operator h=0.125", |b| {
        b.iter(|| TransferOperator::build(&k, &drift, &cells, &[[0.0, 0.0]], 0.125, DuhamelConfig::for_alpha(1.5)).unwrap())
    });
    group.finish();
}

pub fn walks(c: &mut Criterion) {
    let spec = ProcessSpec::stable(1.5, 2).unwrap();
    let dom = Domain::centered_ball(2, 1.0).unwrap();
    let euler = EulerWalker::new(&spec, &dom, None, 1e-3, 100_000_000, None).unwrap();
    let wos = WosWalker::new(1.5, &dom, Some(1e-12), 1_000_000, SphereTime::Expected).unwrap();
    let mut i = 0u64;
    c.bench_function("euler walk dt=1e-3", |b| {
        b.iter(|| {
            i += 1;
            euler.walk(&[0.3, 0.0], &mut stream(1, i), |_| {}).unwrap()
        })
    });
    c.bench_function("wos walk", |b| {
        b.iter(|| {
            i += 1;
            wos.walk(&[0.3, 0.0], &mut stream(2, i)).unwrap()
        })
    });
}
