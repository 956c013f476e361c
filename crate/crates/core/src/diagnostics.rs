//! Energy and Pohozaev functionals along a solution and the checks built on
//! them.
//!
//! Quantities carrying a factor ψ^{n−1} are stored divided by it
//! (suffix `_scaled`) together with L = (n−1) ln ψ, so nothing overflows on
//! exponential models:
//!
//! ```text
//! P/ψ^{n−1} = Θ F + v u/(q+1)
//! K/ψ^{n−1} = (p−1)/p + 1/(q+1) − (n−1)(ψ'/ψ) Θ
//! ```

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::extrapolate::{linear_fit, richardson, Limit};
use crate::geometry::{Completeness, CompletenessVerdict, GeometryProfile};
use crate::models::audit_grid;
use crate::quadrature::GaussLegendre;
use crate::solver::RadialSolution;

/// Volume of the unit ball in ℝⁿ.
pub fn omega(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    std::f64::consts::PI.powf(h) / gamma(h + 1.0)
}

fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// A named pass/fail verdict with its margin (positive means slack).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, margin: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: margin >= 0.0,
            margin,
            detail,
        }
    }
}

/// Constants of the (n, p, q) problem.
#[derive(Debug, Clone, Copy)]
struct Consts {
    n: usize,
    p: f64,
    q: f64,
    beta: f64,
    /// (p−1)/(q+1−p)
    sigma: f64,
}

impl Consts {
    fn of(sol: &RadialSolution) -> Self {
        let pr = sol.problem();
        Self {
            n: pr.n,
            p: pr.p,
            q: pr.q,
            beta: pr.beta(),
            sigma: (pr.p - 1.0) / (pr.q + 1.0 - pr.p),
        }
    }

    /// ((p−1)/(q+p−1))^{(p−1)/(q+p−1)}
    fn envelope_const(&self) -> f64 {
        let e = (self.p - 1.0) / (self.q + self.p - 1.0);
        e.powf(e)
    }

    /// ((p−1)/(q+1−p))^{(p−1)/(q+1−p)}
    fn sharp_const(&self) -> f64 {
        self.sigma.powf(self.sigma)
    }
}

/// Envelope constant of the decay estimate.
pub fn envelope_constant(p: f64, q: f64) -> f64 {
    let e = (p - 1.0) / (q + p - 1.0);
    e.powf(e)
}

/// Limit of J^{(p−1)/(q+1−p)} u in the sharp asymptotic regimes.
pub fn sharp_constant(p: f64, q: f64) -> f64 {
    let s = (p - 1.0) / (q + 1.0 - p);
    s.powf(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdSummary {
    pub checked: usize,
    /// Knots where roundoff in the two terms of P̃ swamps the difference
    /// quotient.
    pub unresolved: usize,
    /// Largest |P' − K|u'|^p| relative to max(|K||u'|^p, term scale).
    pub max_rel: f64,
    pub worst_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub f: Vec<f64>,
    pub p_scaled: Vec<f64>,
    pub k_scaled: Vec<f64>,
    /// (n−1) ln ψ
    pub log_weight: Vec<f64>,
    pub theta: Vec<f64>,
    pub q_ratio: Vec<f64>,
    /// ln E(r)
    pub log_e: Vec<f64>,
    pub fd: FdSummary,
    pub checks: Vec<Check>,
    pub lambda_hat: Option<f64>,
}

impl DiagnosticsReport {
    pub fn p_value(&self, i: usize) -> f64 {
        self.p_scaled[i] * self.log_weight[i].exp()
    }

    pub fn k_value(&self, i: usize) -> f64 {
        self.k_scaled[i] * self.log_weight[i].exp()
    }

    /// Rows (r, F, P, K, Q, E).
    pub fn trace_rows(&self) -> Vec<[f64; 6]> {
        (0..self.r.len())
            .map(|i| {
                [
                    self.r[i],
                    self.f[i],
                    self.p_value(i),
                    self.k_value(i),
                    self.q_ratio[i],
                    self.log_e[i].exp(),
                ]
            })
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// F(r_{i+1}) ≤ F(r_i) + 1e−9 F(0) on the grid.
    pub fn energy_check(&self) -> Check {
        let f0 = self.f[0];
        let worst = self.f.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let e_end = self.log_e.last().map_or(f64::NAN, |l| l.exp());
        Check::new(
            "energy",
            (1e-9 * f0 - worst) / (1e-9 * f0),
            format!("largest step of F {worst:.3e} against F(0) = {f0:.6e}; E(R) = {e_end:.8e}"),
        )
    }
}

fn ensure_compatible(sol: &RadialSolution, profile: &GeometryProfile) -> Result<()> {
    if sol.model() != profile.model() {
        return Err(Error::GridMismatch("solution and profile use different models".into()));
    }
    if sol.problem().n != profile.n() || sol.problem().p != profile.p() {
        return Err(Error::GridMismatch(format!(
            "solution (n={}, p={}) and profile (n={}, p={}) disagree",
            sol.problem().n,
            sol.problem().p,
            profile.n(),
            profile.p()
        )));
    }
    if profile.horizon() < sol.r_end() * (1.0 - 1e-12) {
        return Err(Error::GridMismatch(format!(
            "profile horizon {} is short of the solution end {}",
            profile.horizon(),
            sol.r_end()
        )));
    }
    Ok(())
}

fn dup_of(c: &Consts, v: f64) -> f64 {
    if v < 0.0 {
        ((-v).ln() * c.p * c.beta).exp()
    } else {
        0.0
    }
}

fn energy_f(c: &Consts, u: f64, v: f64) -> f64 {
    (c.p - 1.0) / c.p * dup_of(c, v) + u.powf(c.q + 1.0) / (c.q + 1.0)
}

/// P/ψ^{n−1} = Θ (p−1)/p |u'|^p + u D/(q+1) with D = v + Θ u^q. Written
/// this way nothing cancels where v ≈ −Θ u^q.
fn p_scaled_at(c: &Consts, theta: f64, u: f64, v: f64, d: f64) -> f64 {
    theta * (c.p - 1.0) / c.p * dup_of(c, v) + u * d / (c.q + 1.0)
}

/// D(r0) from the leading series u ≈ α − (α^q/n)^β r^{β+1}/(β+1).
fn defect_at_start(c: &Consts, alpha: f64, r0: f64) -> f64 {
    let nf = c.n as f64;
    -c.q * alpha.powf(c.q - 1.0) * (alpha.powf(c.q) / nf).powf(c.beta) * r0.powf(c.beta + 2.0)
        / (nf * (nf + c.beta + 1.0))
}

/// Advance D = v + Θ u^q from a to b inside grid interval i using
/// D' = −λD + qΘu^{q−1}u' in variation-of-constants form.
#[allow(clippy::too_many_arguments)]
fn defect_step(
    sol: &RadialSolution,
    profile: &GeometryProfile,
    c: &Consts,
    gl: &GaussLegendre,
    i: usize,
    a: f64,
    d_a: f64,
    b: f64,
) -> f64 {
    let model = sol.model();
    let lb = model.log_weight(c.n, b);
    let carried = (model.log_weight(c.n, a) - lb).exp() * d_a;
    let source = gl.integrate(
        |s| {
            let (u, v) = sol.state_on(i, s);
            let du = -(-v).max(0.0).powf(c.beta);
            (model.log_weight(c.n, s) - lb).exp() * c.q * profile.theta(s) * u.max(0.0).powf(c.q - 1.0) * du
        },
        a,
        b,
    );
    carried + source
}

/// ln ∫_a^b |u'|^p ψ^{n−1} on one grid interval by Gauss-Legendre.
fn log_energy_piece(sol: &RadialSolution, c: &Consts, gl: &GaussLegendre, i: usize, a: f64, b: f64) -> f64 {
    if b <= a {
        return f64::NEG_INFINITY;
    }
    let model = sol.model();
    let mut logs = Vec::with_capacity(16);
    let mut shift = f64::NEG_INFINITY;
    let probe = |s: f64| {
        let (_, v) = if i == usize::MAX {
            sol.state(s).unwrap_or((0.0, 0.0))
        } else {
            sol.state_on(i, s)
        };
        if v < 0.0 {
            c.p * c.beta * (-v).ln() + model.log_weight(c.n, s)
        } else {
            f64::NEG_INFINITY
        }
    };
    // exponents first, then the shifted sum
    gl.integrate(
        |s| {
            let l = probe(s);
            logs.push(l);
            shift = shift.max(l);
            0.0
        },
        a,
        b,
    );
    if shift == f64::NEG_INFINITY {
        return shift;
    }
    let mut k = 0;
    let sum = gl.integrate(
        |_| {
            let v = (logs[k] - shift).exp();
            k += 1;
            v
        },
        a,
        b,
    );
    shift + sum.ln()
}

/// ln E(R) with E(R) = n ω_n ∫₀^R |u'|^p ψ^{n−1}.
pub fn log_energy(sol: &RadialSolution, r: f64) -> Result<f64> {
    if r > sol.r_end() * (1.0 + 1e-12) || r < 0.0 {
        return Err(Error::OutOfRange {
            radius: r,
            limit: sol.r_end(),
        });
    }
    let c = Consts::of(sol);
    let gl = GaussLegendre::new(8);
    let mut acc = log_energy_piece(sol, &c, &gl, usize::MAX, 0.0, r.min(sol.r_start()));
    for (i, w) in sol.knots().windows(2).enumerate() {
        if w[0].r >= r {
            break;
        }
        acc = ln_add(acc, log_energy_piece(sol, &c, &gl, i, w[0].r, w[1].r.min(r)));
    }
    Ok(acc + (c.n as f64 * omega(c.n)).ln())
}

const FD_REL: f64 = 1e-3;
/// Safety factor on the roundoff estimate when deciding whether P̃' is
/// resolved.
const FD_RESOLVE: f64 = 10.0;
const SIGN_TOL: f64 = 1e-8;
const F_TOL: f64 = 1e-9;

/// Traces of F, P, K, Q, E on the solution grid with the monotonicity,
/// sign and finite-difference Pohozaev checks.
pub fn functional_traces(sol: &RadialSolution, profile: &GeometryProfile) -> Result<DiagnosticsReport> {
    ensure_compatible(sol, profile)?;
    let c = Consts::of(sol);
    let model = sol.model();
    let alpha = sol.problem().alpha;
    let knots = sol.knots();
    let m = knots.len();
    let mut rep = DiagnosticsReport {
        r: Vec::with_capacity(m),
        u: Vec::with_capacity(m),
        du: Vec::with_capacity(m),
        f: Vec::with_capacity(m),
        p_scaled: Vec::with_capacity(m),
        k_scaled: Vec::with_capacity(m),
        log_weight: Vec::with_capacity(m),
        theta: Vec::with_capacity(m),
        q_ratio: Vec::with_capacity(m),
        log_e: Vec::with_capacity(m),
        fd: FdSummary {
            checked: 0,
            unresolved: 0,
            max_rel: 0.0,
            worst_r: f64::NAN,
        },
        checks: Vec::new(),
        lambda_hat: None,
    };
    let kconst = (c.p - 1.0) / c.p + 1.0 / (c.q + 1.0);
    let gl = GaussLegendre::new(8);
    let mut log_e = log_energy_piece(sol, &c, &gl, usize::MAX, 0.0, sol.r_start());
    let ln_nw = (c.n as f64 * omega(c.n)).ln();
    let mut defect = Vec::with_capacity(m);
    for (i, k) in knots.iter().enumerate() {
        if i > 0 {
            log_e = ln_add(log_e, log_energy_piece(sol, &c, &gl, i - 1, knots[i - 1].r, k.r));
            defect.push(defect_step(
                sol,
                profile,
                &c,
                &gl,
                i - 1,
                knots[i - 1].r,
                defect[i - 1],
                k.r,
            ));
        } else {
            defect.push(defect_at_start(&c, alpha, k.r));
        }
        let (u, v) = (k.y[0], k.y[1]);
        let th = profile.theta(k.r);
        rep.r.push(k.r);
        rep.u.push(u);
        rep.du.push(sol.du_from_v(v));
        rep.f.push(energy_f(&c, u, v));
        rep.p_scaled.push(p_scaled_at(&c, th, u, v, defect[i]));
        rep.k_scaled.push(kconst - profile.lambda(k.r) * th);
        rep.log_weight.push(model.log_weight(c.n, k.r));
        rep.theta.push(th);
        rep.q_ratio.push(profile.j(k.r).powf(c.sigma) * u);
        rep.log_e.push(log_e + ln_nw);
    }

    // F nonincreasing
    let f0 = alpha.powf(c.q + 1.0) / (c.q + 1.0);
    let mut f_margin = f64::INFINITY;
    for w in rep.f.windows(2) {
        f_margin = f_margin.min(w[0] + F_TOL * f0 - w[1]);
    }
    let f_start = (rep.f[0] - f0).abs() / f0;
    rep.checks.push(Check::new(
        "energy-nonincreasing",
        f_margin / f0,
        format!("F(0) = {f0:.12e}, |F(r0) - F(0)|/F(0) = {f_start:.2e}"),
    ));

    // P ≤ 0, nonincreasing, P(0) = 0, scale α^{q+1} I(r)
    let scale = |i: usize| SIGN_TOL * alpha.powf(c.q + 1.0) * rep.theta[i];
    let mut sign_margin = f64::INFINITY;
    let mut mono_margin = f64::INFINITY;
    let mut abs_worst: f64 = 0.0;
    for i in 0..m {
        sign_margin = sign_margin.min((scale(i) - rep.p_scaled[i]) / scale(i));
        abs_worst = abs_worst.max(rep.p_scaled[i].abs() / (scale(i) / SIGN_TOL));
        if i + 1 < m {
            let carried = (rep.log_weight[i] - rep.log_weight[i + 1]).exp() * rep.p_scaled[i];
            mono_margin = mono_margin.min((carried + scale(i + 1) - rep.p_scaled[i + 1]) / scale(i + 1));
        }
    }
    rep.checks.push(Check::new(
        "pohozaev-at-pole",
        (scale(0) - rep.p_scaled[0].abs()) / scale(0),
        format!("P(r0)/psi^(n-1) = {:.3e}", rep.p_scaled[0]),
    ));
    rep.checks.push(Check::new(
        "pohozaev-nonpositive",
        sign_margin,
        format!("max |P|/(alpha^(q+1) I) = {abs_worst:.3e}"),
    ));
    rep.checks
        .push(Check::new("pohozaev-nonincreasing", mono_margin, String::new()));
    if model.is_euclidean() && sol.problem().is_critical() {
        rep.checks.push(Check::new(
            "pohozaev-vanishes",
            (SIGN_TOL - abs_worst) / SIGN_TOL,
            format!("max |P|/(alpha^(q+1) I) = {abs_worst:.3e}"),
        ));
    }

    // P' = K|u'|^p by central differences of the dense output
    let p_at = |j: usize, r: f64| {
        let (u, v) = sol.state_on(j, r);
        p_scaled_at(
            &c,
            profile.theta(r),
            u,
            v,
            defect_step(sol, profile, &c, &gl, j, knots[j].r, defect[j], r),
        )
    };
    for i in 2..m.saturating_sub(2) {
        let r = knots[i].r;
        let (u, v) = (knots[i].y[0], knots[i].y[1]);
        let dup = dup_of(&c, v);
        let terms = rep.theta[i] * (c.p - 1.0) / c.p * dup + (u * defect[i]).abs() / (c.q + 1.0);
        let rhs = rep.k_scaled[i] * dup;
        let denom = rhs.abs().max(kconst * dup);
        let h = (r - knots[i - 1].r).min(knots[i + 1].r - r);
        let d = 1e-3 * h;
        // roundoff of the two terms of P̃, amplified by the difference
        // quotient, against the identity's own scale
        if FD_RESOLVE * f64::EPSILON * terms * (1.0 / d + profile.lambda(r)) > 1e-2 * FD_REL * denom {
            rep.fd.unresolved += 1;
            continue;
        }
        let dp = (p_at(i, r + d) - p_at(i - 1, r - d)) / (2.0 * d);
        let lhs = dp + profile.lambda(r) * rep.p_scaled[i];
        let rel = (lhs - rhs).abs() / denom;
        rep.fd.checked += 1;
        if rel > rep.fd.max_rel || rep.fd.worst_r.is_nan() {
            rep.fd.max_rel = rel;
            rep.fd.worst_r = r;
        }
    }
    rep.checks.push(Check::new(
        "pohozaev-identity",
        (FD_REL - rep.fd.max_rel) / FD_REL,
        format!(
            "{} knots ({} unresolved), worst relative defect {:.3e} at r = {}",
            rep.fd.checked, rep.fd.unresolved, rep.fd.max_rel, rep.fd.worst_r
        ),
    ));
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub check: Check,
    pub radii: usize,
    pub violations: usize,
    pub min_slack: f64,
    pub min_slack_at: f64,
}

/// u(r) ≤ C J(r)^{−(p−1)/(q+1−p)} on the audit radii r ≥ 1.
pub fn decay_envelope_check(sol: &RadialSolution, profile: &GeometryProfile) -> Result<EnvelopeReport> {
    ensure_compatible(sol, profile)?;
    let c = Consts::of(sol);
    let cenv = c.envelope_const();
    let end = sol.r_end();
    let mut rep = EnvelopeReport {
        check: Check::new("envelope", 0.0, String::new()),
        radii: 0,
        violations: 0,
        min_slack: f64::INFINITY,
        min_slack_at: f64::NAN,
    };
    if end < 1.0 {
        rep.check = Check::new("envelope", f64::INFINITY, "no audit radius beyond r = 1".into());
        return Ok(rep);
    }
    for r in audit_grid(1.0, end, crate::models::AUDIT_PER_DECADE) {
        let u = sol.state(r)?.0;
        let env = cenv * profile.j(r).powf(-c.sigma);
        let slack = (env - u) / env;
        rep.radii += 1;
        if slack < 0.0 {
            rep.violations += 1;
        }
        if slack < rep.min_slack {
            rep.min_slack = slack;
            rep.min_slack_at = r;
        }
    }
    rep.check = Check::new(
        "envelope",
        rep.min_slack,
        format!(
            "{} radii, {} violations, min slack {:.4} at r = {:.4}",
            rep.radii, rep.violations, rep.min_slack, rep.min_slack_at
        ),
    );
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: Limit,
    pub target: f64,
    pub deviation: f64,
    pub check: Check,
}

fn limit_report(
    name: &str,
    radii: Vec<f64>,
    values: Vec<f64>,
    target: f64,
    tolerance: f64,
    absolute: bool,
) -> LimitReport {
    let limit = richardson(values[0], values[1], values[2]);
    let deviation = if absolute {
        (limit.value - target).abs()
    } else {
        (limit.value - target).abs() / target
    };
    let check = Check::new(
        name,
        (tolerance - deviation) / tolerance,
        format!("limit {:.6} +- {:.2e} against {target:.6}", limit.value, limit.error),
    );
    LimitReport {
        radii,
        values,
        limit,
        target,
        deviation,
        check,
    }
}

fn require_sharp_regime(verdict: &CompletenessVerdict) -> Result<()> {
    if verdict.verdict != Completeness::PSC {
        return Err(Error::RegimeMismatch(format!(
            "sharp asymptotics need pSC, profile is {}",
            verdict.verdict
        )));
    }
    if !verdict.regime.admits_sharp_asymptotics() {
        return Err(Error::RegimeMismatch(format!(
            "regime {} does not support the sharp limit",
            verdict.regime
        )));
    }
    Ok(())
}

/// Default margin for ratio limits.
pub const RATIO_TOL: f64 = 0.05;
/// Default margin for the refined pSI ratio.
pub const REFINED_TOL: f64 = 0.10;

fn dyadic(end: f64) -> Vec<f64> {
    vec![end / 4.0, end / 2.0, end]
}

/// Q(r) = J^{(p−1)/(q+1−p)} u at R/4, R/2, R and its extrapolated limit.
pub fn asymptotic_ratio_sc(
    sol: &RadialSolution,
    profile: &GeometryProfile,
    verdict: &CompletenessVerdict,
) -> Result<LimitReport> {
    ensure_compatible(sol, profile)?;
    require_sharp_regime(verdict)?;
    let c = Consts::of(sol);
    let radii = dyadic(sol.r_end());
    let values = radii
        .iter()
        .map(|&r| Ok(profile.j(r).powf(c.sigma) * sol.state(r)?.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(limit_report(
        "ratio-sc",
        radii,
        values,
        c.sharp_const(),
        RATIO_TOL,
        false,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// u'ψ/(uψ') → 0
    pub log_ratio: LimitReport,
    /// (−u')u^{−q/(p−1)}(ψ'/ψ)^{1/(p−1)} → (1/(n−1))^{1/(p−1)}
    pub flux_ratio: LimitReport,
}

pub fn lemma_limit_checks(
    sol: &RadialSolution,
    profile: &GeometryProfile,
    verdict: &CompletenessVerdict,
) -> Result<LemmaReport> {
    ensure_compatible(sol, profile)?;
    require_sharp_regime(verdict)?;
    let c = Consts::of(sol);
    let radii = dyadic(sol.r_end());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &r in &radii {
        let (u, du, _) = sol.evaluate(r)?;
        let g = sol.model().point(r).dlog;
        a.push(du / (u * g));
        b.push(-du * u.powf(-c.q * c.beta) * g.powf(c.beta));
    }
    let target = (1.0 / (c.n as f64 - 1.0)).powf(c.beta);
    Ok(LemmaReport {
        log_ratio: limit_report("lemma-log-ratio", radii.clone(), a, 0.0, RATIO_TOL, true),
        flux_ratio: limit_report("lemma-flux-ratio", radii, b, target, RATIO_TOL, false),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiReport {
    pub lambda_hat: f64,
    /// Last iterate change plus the first neglected term of the tail
    /// expansion.
    pub lambda_error: f64,
    /// λ̂ iterates, starting from u(R).
    pub iterates: Vec<f64>,
    pub lambda_from: f64,
    pub ratio_at: f64,
    pub refined_ratio: f64,
    pub target: f64,
    pub deviation: f64,
    pub bound: f64,
    pub bound_slack: f64,
    pub checks: Vec<Check>,
}

/// Plateau threshold |u'(R)|·R < 0.01·u(R).
pub const PLATEAU: f64 = 0.01;

/// λ̂ from the horizon and the refined ratio (u(r) − λ̂)/tailJ(r) at
/// `ratio_at` (R/2 when `None`).
pub fn asymptotic_ratio_si(
    sol: &RadialSolution,
    profile: &GeometryProfile,
    verdict: &CompletenessVerdict,
    ratio_at: Option<f64>,
) -> Result<SiReport> {
    ensure_compatible(sol, profile)?;
    if verdict.verdict != Completeness::PSI {
        return Err(Error::RegimeMismatch(format!(
            "refined ratio needs pSI, profile is {}",
            verdict.verdict
        )));
    }
    let c = Consts::of(sol);
    let big_r = sol.r_end();
    let (u_r, du_r, _) = sol.evaluate(big_r)?;
    if du_r.abs() * big_r >= PLATEAU * u_r {
        return Err(Error::NoPlateau(format!(
            "|u'(R)| R = {:.3e} against u(R) = {u_r:.3e}",
            du_r.abs() * big_r
        )));
    }
    let tail_r = profile
        .tail_j(big_r)
        .ok_or_else(|| Error::NoPlateau("tail integral not converged".into()))?;
    let expo = c.q * c.beta;
    let mut iterates = vec![u_r];
    let mut lam = u_r;
    for _ in 0..3 {
        lam = u_r - tail_r * lam.powf(expo);
        iterates.push(lam);
    }
    let spread = (iterates[3] - iterates[2]).abs();
    let lambda_error = spread + tail_r * lam.powf(expo) * expo * (u_r - lam).abs() / lam;
    let at = ratio_at.unwrap_or(big_r / 2.0);
    let tail_at = profile
        .tail_j(at)
        .ok_or_else(|| Error::NoPlateau("tail integral not converged".into()))?;
    let refined = (sol.state(at)?.0 - lam) / tail_at;
    let target = lam.powf(expo);
    let deviation = (refined - target).abs() / target;
    let j_inf = verdict.j_inf.or(profile.j_inf()).expect("pSI verdict carries J(inf)");
    let bound = c.envelope_const() * j_inf.powf(-c.sigma);
    let bound_slack = (bound - lam) / bound;
    let alpha = sol.problem().alpha;
    let checks = vec![
        Check::new(
            "ratio-si",
            (REFINED_TOL - deviation) / REFINED_TOL,
            format!("ratio {refined:.6} at r = {at} against lambda^(q/(p-1)) = {target:.6}"),
        ),
        Check::new("lambda-bound", bound_slack, format!("lambda {lam:.8} <= {bound:.8}")),
        Check::new(
            "lambda-range",
            (lam / alpha).min(1.0 - lam / alpha),
            format!("lambda/alpha = {:.6}", lam / alpha),
        ),
    ];
    Ok(SiReport {
        lambda_hat: lam,
        lambda_error,
        iterates,
        lambda_from: big_r,
        ratio_at: at,
        refined_ratio: refined,
        target,
        deviation,
        bound,
        bound_slack,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCertificate {
    pub regime: Completeness,
    pub radii: Vec<f64>,
    pub log_energy: Vec<f64>,
    /// pSC: least-squares slope of E against ln(1/u).
    pub slope: Option<f64>,
    /// pSI: E(2R)/E(R) for consecutive radii.
    pub doubling_ratios: Vec<f64>,
    /// pSI: min over radii of E / (I^{(2p−1)/(p−1)} / (ψ^{n−1})^{p/(p−1)}).
    pub trend_constant: Option<f64>,
    pub check: Check,
}

/// Certify unbounded energy growth along the horizon.
pub fn energy_divergence_probe(
    sol: &RadialSolution,
    profile: &GeometryProfile,
    verdict: &CompletenessVerdict,
) -> Result<EnergyCertificate> {
    ensure_compatible(sol, profile)?;
    if sol.model().is_euclidean() && sol.problem().is_critical() {
        return Err(Error::EuclideanCritical);
    }
    let c = Consts::of(sol);
    let end = sol.r_end();
    match verdict.verdict {
        Completeness::PSC => {
            let radii: Vec<f64> = (0..8).map(|k| end / 8.0 * (1.0 + k as f64)).collect();
            let mut x = Vec::new();
            let mut e = Vec::new();
            let mut log_e = Vec::new();
            for &r in &radii {
                let le = log_energy(sol, r)?;
                log_e.push(le);
                e.push(le.exp());
                x.push(-sol.state(r)?.0.ln());
            }
            let (slope, _) = linear_fit(&x, &e);
            let increasing = e.windows(2).all(|w| w[1] > w[0]);
            let margin = if increasing { slope } else { -1.0 };
            Ok(EnergyCertificate {
                regime: Completeness::PSC,
                radii,
                log_energy: log_e,
                slope: Some(slope),
                doubling_ratios: Vec::new(),
                trend_constant: None,
                check: Check::new(
                    "energy-divergence",
                    margin,
                    format!("E against log(1/u): slope {slope:.6e}"),
                ),
            })
        }
        Completeness::PSI => {
            let radii: Vec<f64> = (0..4).map(|k| end / 8.0 * 2f64.powi(k)).collect();
            let log_e = radii.iter().map(|&r| log_energy(sol, r)).collect::<Result<Vec<_>>>()?;
            let ratios: Vec<f64> = log_e.windows(2).map(|w| (w[1] - w[0]).exp()).collect();
            let mut trend = f64::INFINITY;
            for (k, &r) in radii.iter().enumerate() {
                let log_trend =
                    (2.0 * c.p - 1.0) * c.beta * profile.log_i(r) - c.p * c.beta * sol.model().log_weight(c.n, r);
                trend = trend.min((log_e[k] - log_trend).exp());
            }
            let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(EnergyCertificate {
                regime: Completeness::PSI,
                radii,
                log_energy: log_e,
                slope: None,
                doubling_ratios: ratios,
                trend_constant: Some(trend),
                check: Check::new(
                    "energy-divergence",
                    worst - 1.2,
                    format!("min E(2R)/E(R) = {worst:.4e}, trend constant {trend:.3e}"),
                ),
            })
        }
        Completeness::Inconclusive => Err(Error::RegimeMismatch(
            "energy probe needs a completeness verdict".into(),
        )),
    }
}

/// E(R) at a sequence of radii, each with a Richardson estimate of E(∞)
/// built from R/4, R/2, R.
pub fn energy_limit(sol: &RadialSolution, r: f64) -> Result<Limit> {
    let e = [r / 4.0, r / 2.0, r]
        .iter()
        .map(|&x| log_energy(sol, x).map(f64::exp))
        .collect::<Result<Vec<_>>>()?;
    Ok(richardson(e[0], e[1], e[2]))
}
