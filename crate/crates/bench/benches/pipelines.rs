use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use plap_bench::{fixture, model, TOL};
use plap_core::*;

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    for (name, desc, horizon) in [
        ("hyperbolic", "hyperbolic", 60.0),
        ("exppower-m3", "exppower:c=1,m=3", 10.0),
    ] {
        let m = model(desc);
        let prob = Problem::new(3, 2.0, 5.0, 1.0).unwrap();
        let cfg = SolverConfig::new(horizon).with_tol(TOL);
        g.bench_function(name, |b| b.iter(|| integrate(black_box(&prob), &m, &cfg).unwrap()));
    }
    g.finish();
}

fn geometry(c: &mut Criterion) {
    let mut g = c.benchmark_group("geometry");
    for (name, desc, horizon) in [
        ("hyperbolic", "hyperbolic", 60.0),
        ("powerlike-k2", "powerlike:k=2", 60.0),
    ] {
        let m = model(desc);
        g.bench_function(name, |b| {
            b.iter(|| {
                classify_completeness(&GeometryProfile::build(black_box(&m), 3, 2.0, horizon, TOL).unwrap()).unwrap()
            })
        });
    }
    g.finish();
}

fn diagnostics(c: &mut Criterion) {
    let (sol, profile) = fixture("hyperbolic", 3, 2.0, 5.0, 1.0, 60.0);
    c.bench_function("traces/hyperbolic", |b| {
        b.iter(|| functional_traces(black_box(&sol), &profile).unwrap())
    });
    let (sol, profile) = fixture("euclidean", 5, 1.5, 2.0, 1.0, 20.0);
    c.bench_function("traces/euclidean-p1.5", |b| {
        b.iter(|| functional_traces(black_box(&sol), &profile).unwrap())
    });
}

fn sobolev(c: &mut Criterion) {
    let e = model("euclidean");
    let h = model("hyperbolic");
    let bs = [1.0, 0.1, 0.01];
    c.bench_function("quotient/euclidean-auto", |b| {
        b.iter(|| concentration_sweep(&e, 3, 2.0, black_box(&bs), Truncation::Auto { tail_tol: 1e-8 }).unwrap())
    });
    c.bench_function("quotient/hyperbolic-fixed", |b| {
        b.iter(|| concentration_sweep(&h, 3, 2.0, black_box(&bs), Truncation::Fixed(5.0)).unwrap())
    });
}

fn oscillator(c: &mut Criterion) {
    let mut g = c.benchmark_group("oscillate");
    g.sample_size(10);
    let cfg = OscillatorConfig::default();
    g.bench_function("four-stages", |b| {
        b.iter(|| construct(3, 2.0, 5.0, black_box(1.0), 4, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, solver, geometry, diagnostics, sobolev, oscillator);
criterion_main!(benches);
