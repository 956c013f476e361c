//! Recursive construction of a glued model on which Q(r) = J^σ u keeps
//! oscillating between two bands around the sharp constant.
//!
//! Stage k starts at r_k. Even stages make ψ asymptotically affine and wait
//! for Q to drop below T_low, odd stages drive ψ'/ψ to 2k and wait for Q to
//! rise above T_high. Each stage rebuilds the glued model from its
//! descriptor and resumes geometry and solution from the last trigger.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{sharp_constant, Check};
use crate::error::{Error, Result};
use crate::geometry::GeometryProfile;
use crate::models::{glue_models, GluePiece, GluedSpec, ModelFunction, ModelKind};
use crate::ode::{Flow, Knot};
use crate::solver::{integrate_observed, Problem, RadialSolution, SolverConfig, TerminationReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorConfig {
    /// Model from the pole up to r_1.
    pub base: ModelKind,
    /// Pieces for stages 1..K; `None` uses Linear on even and
    /// Exponential{2k} on odd stages.
    pub pieces: Option<Vec<GluePiece>>,
    pub blend_width: f64,
    /// Per-stage horizon cap is `cap_factor·(r_k + 1)`.
    pub cap_factor: f64,
    /// Times a stage may double its cap before timing out.
    pub max_doublings: u32,
    pub solver_tol: f64,
    pub geometry_tol: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            base: ModelKind::Euclidean {},
            pieces: None,
            blend_width: 0.5,
            cap_factor: 50.0,
            max_doublings: 5,
            solver_tol: 1e-10,
            geometry_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub sharp: f64,
    pub low: f64,
    pub high: f64,
    /// σ = (p−1)/(q+1−p)
    pub sigma: f64,
}

impl Thresholds {
    pub fn new(n: usize, p: f64, q: f64) -> Self {
        let e = 1.0 / (q + 1.0 - p);
        let nf = n as f64;
        let sharp = sharp_constant(p, q);
        Self {
            sharp,
            low: sharp * (1.0 - 1.0 / nf).powf(e),
            high: sharp * (1.0 - 1.0 / (2.0 * nf)).powf(e),
            sigma: (p - 1.0) * e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub k: usize,
    pub piece: GluePiece,
    pub r_start: f64,
    /// Earliest admissible trigger, r_k + 1.
    pub min_radius: f64,
    pub cap: f64,
    /// u must fall below 2^{−k}.
    pub decay_target: f64,
    /// Odd stages need ln ψ ≥ k r at the trigger.
    pub growth_rate: Option<f64>,
}

impl StagePlan {
    pub fn even(&self) -> bool {
        self.k.is_multiple_of(2)
    }

    fn fires(&self, th: &Thresholds, r: f64, u: f64, q: f64, log_psi: f64) -> bool {
        if r < self.min_radius || u >= self.decay_target {
            return false;
        }
        match self.growth_rate {
            Some(rate) => q > th.high && log_psi - rate * r >= 0.0,
            None => q < th.low,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub k: usize,
    pub piece: GluePiece,
    pub r_start: f64,
    pub r_trigger: f64,
    /// Horizon cap the stage ran with.
    pub cap: f64,
    pub q_trigger: f64,
    pub u_trigger: f64,
    pub log_psi_trigger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEvidence {
    pub ell: f64,
    /// ln ψ(r) − ℓ r at the odd-stage triggers.
    pub log_ratios: Vec<f64>,
    pub increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationCertificate {
    pub problem: Problem,
    pub thresholds: Thresholds,
    pub stages: Vec<StageRecord>,
    /// Minimum Q over even triggers.
    pub band_low: f64,
    /// Maximum Q over odd triggers.
    pub band_high: f64,
    pub growth: Vec<GrowthEvidence>,
    pub model: GluedSpec,
}

fn stage_piece(cfg: &OscillatorConfig, k: usize) -> Result<GluePiece> {
    let piece = match &cfg.pieces {
        None if k.is_multiple_of(2) => GluePiece::Linear,
        None => GluePiece::Exponential { rate: 2.0 * k as f64 },
        Some(list) => list
            .get(k - 1)
            .cloned()
            .ok_or_else(|| Error::InvalidParameter(format!("no piece given for stage {k}")))?,
    };
    if k % 2 == 1 {
        let target = 2.0 * k as f64;
        match &piece {
            GluePiece::Exponential { rate } if *rate == target => {}
            other => {
                return Err(Error::ConvexityViolation(format!(
                    "stage {k} needs psi'/psi -> {target}, which {other:?} cannot reach convexly"
                )))
            }
        }
    }
    Ok(piece)
}

fn growth(stages: &[StageRecord], ell: f64) -> GrowthEvidence {
    let log_ratios: Vec<f64> = stages
        .iter()
        .filter(|s| s.k % 2 == 1)
        .map(|s| s.log_psi_trigger - ell * s.r_trigger)
        .collect();
    let increasing = log_ratios.windows(2).all(|w| w[1] > w[0]);
    GrowthEvidence {
        ell,
        log_ratios,
        increasing,
    }
}

enum Attempt {
    Fired(Box<(ModelFunction, RadialSolution, GeometryProfile)>, (f64, f64, f64)),
    Capped { last_q: f64, radius: f64 },
    Stalled { last_q: f64, radius: f64 },
}

fn run_stage(
    prob: &Problem,
    th: &Thresholds,
    plan: &StagePlan,
    glue: &[(GluePiece, f64)],
    prev: Option<&(ModelFunction, RadialSolution, GeometryProfile)>,
    cfg: &OscillatorConfig,
) -> Result<Attempt> {
    let (n, p, cap, r_k) = (prob.n, prob.p, plan.cap, plan.r_start);
    let model = glue_models(glue, cfg.blend_width, cap)?;
    let profile = match prev {
        None => GeometryProfile::build_without_tail(&model, n, p, cap, cfg.geometry_tol)?,
        Some((_, _, g)) => g.continue_with(&model, r_k, cap)?,
    };
    let mut fired: Option<(f64, f64, f64)> = None;
    let mut last_q = f64::NAN;
    let observer = |knot: &Knot<2>| {
        let u = knot.y[0];
        let qv = profile.j(knot.r).powf(th.sigma) * u;
        last_q = qv;
        let log_psi = model.point(knot.r).log_psi;
        if plan.fires(th, knot.r, u, qv, log_psi) {
            fired = Some((qv, u, log_psi));
            return Flow::Stop;
        }
        Flow::Continue
    };
    let sol = match prev {
        None => integrate_observed(prob, &model, &SolverConfig::new(cap).with_tol(cfg.solver_tol), observer)?,
        Some((_, s, _)) => s.continue_with(&model, r_k, cap, observer)?,
    };
    Ok(match fired {
        Some(f) => Attempt::Fired(Box::new((model, sol, profile)), f),
        None if sol.meta.termination == TerminationReason::ReachedHorizon => Attempt::Capped {
            last_q,
            radius: sol.r_end(),
        },
        // underflow before the trigger: a larger cap cannot help
        None => Attempt::Stalled {
            last_q,
            radius: sol.r_end(),
        },
    })
}

/// Glued model, solution and profile after the last stage.
#[derive(Debug, Clone)]
pub struct Construction {
    pub model: ModelFunction,
    pub solution: RadialSolution,
    pub profile: GeometryProfile,
    pub certificate: OscillationCertificate,
}

/// Run `stages` stages of the construction.
pub fn construct(n: usize, p: f64, q: f64, alpha: f64, stages: usize, cfg: &OscillatorConfig) -> Result<Construction> {
    if stages < 4 || !stages.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "stage count must be even and >= 4, got {stages}"
        )));
    }
    run_stages(n, p, q, alpha, stages, cfg)
}

fn run_stages(n: usize, p: f64, q: f64, alpha: f64, stages: usize, cfg: &OscillatorConfig) -> Result<Construction> {
    let prob = Problem::new(n, p, q, alpha)?;
    if matches!(cfg.base, ModelKind::Glued(_)) {
        return Err(Error::InvalidParameter("base model must be a closed form".into()));
    }
    // refuse before any integration
    let pieces: Vec<GluePiece> = (1..stages).map(|k| stage_piece(cfg, k)).collect::<Result<_>>()?;
    let th = Thresholds::new(n, p, q);
    let base = GluePiece::Model {
        model: cfg.base.clone(),
    };

    let mut glue: Vec<(GluePiece, f64)> = vec![(base.clone(), 0.0)];
    let mut records: Vec<StageRecord> = Vec::with_capacity(stages);
    let mut state: Option<(ModelFunction, RadialSolution, GeometryProfile)> = None;
    let mut r_k = 0.0;
    for k in 0..stages {
        let piece = if k == 0 { base.clone() } else { pieces[k - 1].clone() };
        if k > 0 {
            glue.push((piece.clone(), r_k));
        }
        let mut cap = cfg.cap_factor * (r_k + 1.0);
        let mut doublings = 0;
        let (model, sol, profile, fired) = loop {
            let plan = StagePlan {
                k,
                piece: piece.clone(),
                r_start: r_k,
                min_radius: r_k + 1.0,
                cap,
                decay_target: 0.5f64.powi(k as i32),
                growth_rate: if k % 2 == 1 { Some(k as f64) } else { None },
            };
            let attempt = run_stage(&prob, &th, &plan, &glue, state.as_ref(), cfg)?;
            match attempt {
                Attempt::Fired(built, f) => {
                    let (m, s, g) = *built;
                    break (m, s, g, f);
                }
                Attempt::Capped { .. } if doublings < cfg.max_doublings => {
                    cap *= 2.0;
                    doublings += 1;
                }
                Attempt::Capped { last_q, radius } | Attempt::Stalled { last_q, radius } => {
                    return Err(Error::TriggerTimeout {
                        stage: k,
                        last_q,
                        radius,
                    })
                }
            }
        };
        let (q_trigger, u_trigger, log_psi_trigger) = fired;
        let r_next = sol.r_end();
        records.push(StageRecord {
            k,
            piece,
            r_start: r_k,
            r_trigger: r_next,
            cap,
            q_trigger,
            u_trigger,
            log_psi_trigger,
        });
        r_k = r_next;
        state = Some((model, sol, profile));
    }
    let (model, solution, profile) = state.expect("at least one stage");
    let band_low = records
        .iter()
        .filter(|s| s.k % 2 == 0)
        .map(|s| s.q_trigger)
        .fold(f64::INFINITY, f64::min);
    let band_high = records
        .iter()
        .filter(|s| s.k % 2 == 1)
        .map(|s| s.q_trigger)
        .fold(f64::NEG_INFINITY, f64::max);
    let growth = vec![growth(&records, 1.0), growth(&records, 2.0)];
    let ModelKind::Glued(spec) = model.kind().clone() else {
        unreachable!("construction always glues")
    };
    let certificate = OscillationCertificate {
        problem: prob,
        thresholds: th,
        stages: records,
        band_low,
        band_high,
        growth,
        model: spec,
    };
    Ok(Construction {
        model,
        solution,
        profile,
        certificate,
    })
}

/// Relative tolerance for recomputed trigger quantities.
pub const RECOMPUTE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: String, margin: f64, detail: String) -> Check {
    Check {
        name,
        passed: margin >= 0.0,
        margin,
        detail,
    }
}

/// Recompute Q, u and ψ at every trigger radius and re-derive the band
/// separation and growth evidence. Disagreement with the stored log is
/// reported as `Inconsistent` naming the stage.
pub fn verify_certificate(
    cert: &OscillationCertificate,
    sol: &RadialSolution,
    profile: &GeometryProfile,
) -> Result<CertificateVerdict> {
    let th = cert.thresholds;
    let model = sol.model();
    if model.kind() != &ModelKind::Glued(cert.model.clone()) {
        return Err(Error::Inconsistent(
            "solution model differs from the certified descriptor".into(),
        ));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= RECOMPUTE_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let mut checks = Vec::new();
    let mut prev_r = 0.0;
    for s in &cert.stages {
        let bad = |what: &str, stored: f64, got: f64| {
            Error::Inconsistent(format!(
                "stage {}: {what} recomputed as {got:e}, certificate has {stored:e}",
                s.k
            ))
        };
        if s.r_start != prev_r {
            return Err(bad("start radius", s.r_start, prev_r));
        }
        let (u, _) = sol.state(s.r_trigger).map_err(|_| bad("u", s.u_trigger, f64::NAN))?;
        let qv = profile.j(s.r_trigger).powf(th.sigma) * u;
        let log_psi = model.point(s.r_trigger).log_psi;
        if !close(u, s.u_trigger) {
            return Err(bad("u", s.u_trigger, u));
        }
        if !close(qv, s.q_trigger) {
            return Err(bad("Q", s.q_trigger, qv));
        }
        if !close(log_psi, s.log_psi_trigger) {
            return Err(bad("ln psi", s.log_psi_trigger, log_psi));
        }
        checks.push(check(
            format!("stage-{}-spacing", s.k),
            s.r_trigger - s.r_start - 1.0,
            format!("r = {}", s.r_trigger),
        ));
        let band = if s.k % 2 == 0 { th.low - qv } else { qv - th.high };
        checks.push(check(format!("stage-{}-band", s.k), band, format!("Q = {qv}")));
        checks.push(check(
            format!("stage-{}-decay", s.k),
            0.5f64.powi(s.k as i32) - u,
            format!("u = {u:e}"),
        ));
        if s.k % 2 == 1 {
            let g = log_psi - s.k as f64 * s.r_trigger;
            checks.push(check(format!("stage-{}-growth", s.k), g, format!("ln psi - k r = {g}")));
        }
        prev_r = s.r_trigger;
    }
    checks.push(check(
        "band-separation".into(),
        (cert.band_high - cert.band_low) - (th.high - th.low),
        format!("[{}, {}] vs [{}, {}]", cert.band_low, cert.band_high, th.low, th.high),
    ));
    for ev in &cert.growth {
        let again = growth(&cert.stages, ev.ell);
        if again.log_ratios.iter().zip(&ev.log_ratios).any(|(a, b)| !close(*a, *b)) {
            return Err(Error::Inconsistent(format!(
                "growth evidence for ell = {} does not recompute",
                ev.ell
            )));
        }
        let margin = again
            .log_ratios
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        checks.push(check(
            format!("growth-ell-{}", ev.ell),
            margin,
            format!("{:?}", again.log_ratios),
        ));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(CertificateVerdict { passed, checks })
}
