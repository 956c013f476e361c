//! Benchmark fixtures.

use plap_core::{
    integrate, make_model, GeometryProfile, ModelFunction, ModelKind, Problem, RadialSolution, SolverConfig,
};

pub const TOL: f64 = 1e-10;

pub fn model(descriptor: &str) -> ModelFunction {
    let kind: ModelKind = descriptor.parse().expect("valid descriptor");
    make_model(&kind).expect("valid model")
}

/// Solution and profile for one (model, n, p, q, α) up to `horizon`.
pub fn fixture(
    descriptor: &str,
    n: usize,
    p: f64,
    q: f64,
    alpha: f64,
    horizon: f64,
) -> (RadialSolution, GeometryProfile) {
    let m = model(descriptor);
    let prob = Problem::new(n, p, q, alpha).expect("valid problem");
    let sol = integrate(&prob, &m, &SolverConfig::new(horizon).with_tol(TOL)).expect("solve");
    let profile = GeometryProfile::build(&m, n, p, horizon, TOL).expect("profile");
    (sol, profile)
}
