//! Radial solutions of the p-Laplace equation −Δ_p u = u^q on model manifolds.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod extrapolate;
pub mod geometry;
pub mod io;
pub mod models;
pub mod ode;
pub mod oscillator;
pub mod quadrature;
pub mod sobolev;
pub mod solver;

pub use diagnostics::{
    asymptotic_ratio_sc, asymptotic_ratio_si, decay_envelope_check, energy_divergence_probe, functional_traces,
    lemma_limit_checks, Check, DiagnosticsReport,
};
pub use error::{Error, Result};
pub use extrapolate::Limit;
pub use geometry::{
    classify_completeness, detect_regime, Completeness, CompletenessVerdict, GeometryProfile, RegimeTag,
};
pub use models::{glue_models, make_model, GluePiece, GluedSpec, ModelFunction, ModelKind, ModelPoint};
pub use oscillator::{construct, verify_certificate, OscillationCertificate, OscillatorConfig, StagePlan};
pub use sobolev::{concentration_sweep, sobolev_quotient, AubinTalenti, QuotientReport, Truncation};
pub use solver::{integrate, Problem, RadialSolution, SolverConfig};
