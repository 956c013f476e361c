//! Volume-surface ratio Θ, its integral J, tails, and the regime tests.
//!
//! Θ is obtained from the linear ODE Θ' = 1 − (n−1)(ψ'/ψ)Θ, which never
//! touches ψ^{n−1} itself. An independent pointwise route computes
//! Θ(s) = ∫₀^s exp(L(t) − L(s)) dt with L = (n−1) ln ψ and is used for the
//! tail integrals beyond the tabulated horizon.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolate::{richardson, Limit};
use crate::models::{audit_grid, ModelFunction};
use crate::ode::{self, EndMode, Flow, Knot, StepControl, System, Trajectory};
use crate::quadrature;

/// Radius where the tabulated profile starts; below it the series
/// Θ ≈ r/n is used.
pub const R_MIN: f64 = 1e-6;

struct ThetaSystem<'a> {
    model: &'a ModelFunction,
    nm1: f64,
    beta: f64,
}

impl System<3> for ThetaSystem<'_> {
    fn rhs(&self, r: f64, y: &[f64; 3]) -> [f64; 3] {
        let lam = self.nm1 * self.model.point(r).dlog;
        let th = y[0];
        let tb = th.powf(self.beta);
        [1.0 - lam * th, tb, tb - y[2] / th]
    }
}

/// Converged tail ∫_R^∞ Θ^{1/(p−1)} ds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    pub from: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct GeometryProfile {
    model: ModelFunction,
    n: usize,
    p: f64,
    horizon: f64,
    tol: f64,
    traj: Trajectory<3>,
    tail: Option<Tail>,
}

fn check_np(n: usize, p: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("dimension n must be >= 2, got {n}")));
    }
    if !(p > 1.0 && p < n as f64) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, {n}), got {p}")));
    }
    Ok(())
}

fn control(tol: f64) -> StepControl<3> {
    StepControl {
        rel_tol: 0.1 * tol,
        abs_tol: [1e-3 * tol * R_MIN; 3],
        h_init: 0.1 * R_MIN,
        h_min: 1e-18,
        h_max: 0.5,
        max_steps: 20_000_000,
    }
}

impl GeometryProfile {
    /// Tabulate Θ, J and the (hp fail) proxy on [0, horizon] and, when
    /// the model is trusted beyond the horizon, try to converge the tail.
    pub fn build(model: &ModelFunction, n: usize, p: f64, horizon: f64, tol: f64) -> Result<Self> {
        let mut prof = Self::build_without_tail(model, n, p, horizon, tol)?;
        prof.tail = tail_integral(model, n, p, horizon, tol)?;
        Ok(prof)
    }

    /// Same as [`build`](Self::build) but never attempts the tail.
    pub fn build_without_tail(model: &ModelFunction, n: usize, p: f64, horizon: f64, tol: f64) -> Result<Self> {
        check_np(n, p)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be > 0, got {tol}")));
        }
        if !(horizon > R_MIN) || horizon > model.valid_to() {
            return Err(Error::OutOfRange {
                radius: horizon,
                limit: model.valid_to(),
            });
        }
        let nf = n as f64;
        let beta = 1.0 / (p - 1.0);
        let th0 = R_MIN / nf;
        let y0 = [
            th0,
            th0.powf(beta) * R_MIN / (beta + 1.0),
            th0.powf(beta) * R_MIN / (beta + nf + 1.0),
        ];
        let sys = ThetaSystem {
            model,
            nm1: nf - 1.0,
            beta,
        };
        let traj = Trajectory::new(Knot {
            r: R_MIN,
            y: y0,
            dy: sys.rhs(R_MIN, &y0),
        });
        let mut prof = Self {
            model: model.clone(),
            n,
            p,
            horizon,
            tol,
            traj,
            tail: None,
        };
        prof.advance(horizon)?;
        Ok(prof)
    }

    fn advance(&mut self, to: f64) -> Result<()> {
        let sys = ThetaSystem {
            model: &self.model,
            nm1: self.n as f64 - 1.0,
            beta: 1.0 / (self.p - 1.0),
        };
        ode::integrate(
            &sys,
            &mut self.traj,
            to,
            EndMode::Exact,
            &control(self.tol),
            |_, y| y[0] > 0.0,
            |_| Flow::Continue,
        )
        .map_err(|e| Error::QuadratureFailure(format!("volume ratio: {e}")))?;
        self.horizon = to;
        Ok(())
    }

    /// Reuse the tabulation on [0, from] for a model that agrees with the
    /// current one there, and extend to `horizon`.
    pub fn continue_with(&self, model: &ModelFunction, from: f64, horizon: f64) -> Result<Self> {
        if from > self.horizon || horizon > model.valid_to() || horizon < from {
            return Err(Error::OutOfRange {
                radius: horizon,
                limit: model.valid_to().min(self.horizon),
            });
        }
        let mut next = Self {
            model: model.clone(),
            tail: None,
            ..self.clone()
        };
        let sys = ThetaSystem {
            model,
            nm1: self.n as f64 - 1.0,
            beta: self.beta(),
        };
        next.traj.truncate_at(&sys, from);
        next.advance(horizon)?;
        Ok(next)
    }

    pub fn model(&self) -> &ModelFunction {
        &self.model
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn tol(&self) -> f64 {
        self.tol
    }
    pub fn tail(&self) -> Option<Tail> {
        self.tail
    }
    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.traj.knots.iter().map(|k| k.r)
    }
    pub fn beta(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }

    fn state(&self, r: f64) -> [f64; 3] {
        self.traj.eval(r.min(self.horizon)).0
    }

    /// Θ(r) = I(r)/ψ^{n−1}(r).
    pub fn theta(&self, r: f64) -> f64 {
        if r <= R_MIN {
            return r / self.n as f64;
        }
        self.state(r)[0]
    }

    /// J(r) = ∫₀^r Θ^{1/(p−1)}.
    pub fn j(&self, r: f64) -> f64 {
        if r <= R_MIN {
            let b = self.beta();
            return (r / self.n as f64).powf(b) * r / (b + 1.0);
        }
        self.state(r)[1]
    }

    /// ln I(r) = ln Θ + (n−1) ln ψ.
    pub fn log_i(&self, r: f64) -> f64 {
        self.theta(r).ln() + self.model.log_weight(self.n, r)
    }

    /// (n−1)ψ'/ψ.
    pub fn lambda(&self, r: f64) -> f64 {
        (self.n as f64 - 1.0) * self.model.point(r).dlog
    }

    /// ∫₀^r Θ^{1/(p−1)} I ds / (J(r) I(r)), the quotient whose liminf is
    /// the power-like failure condition.
    pub fn fail_proxy(&self, r: f64) -> f64 {
        if r <= R_MIN {
            let b = self.beta();
            let nf = self.n as f64;
            return (b + 1.0) / (b + nf + 1.0);
        }
        let s = self.state(r);
        s[2] / s[1]
    }

    /// ∫_r^∞ Θ^{1/(p−1)} for r ≤ horizon; `None` unless the tail converged.
    pub fn tail_j(&self, r: f64) -> Option<f64> {
        let t = self.tail?;
        Some(self.j(self.horizon) - self.j(r) + t.value)
    }

    pub fn j_inf(&self) -> Option<f64> {
        self.tail.map(|t| self.j(self.horizon) + t.value)
    }

    /// Largest knot radius at which ψ^{n−1}, ψ'' and I are still finite.
    pub fn max_representable_radius(&self) -> f64 {
        let mut last = 0.0;
        for k in &self.traj.knots {
            let (psi, dpsi, ddpsi) = self.model.eval(k.r);
            let i = self.log_i(k.r).exp();
            if !(psi.powi(self.n as i32 - 1).is_finite() && dpsi.is_finite() && ddpsi.is_finite() && i.is_finite()) {
                break;
            }
            last = k.r;
        }
        last
    }

    /// Rows (r, ψ, ψ', ψ'', I, Θ, J) at every knot.
    pub fn rows(&self) -> Result<Vec<[f64; 7]>> {
        let mut out = Vec::with_capacity(self.traj.knots.len());
        for k in &self.traj.knots {
            let (psi, dpsi, ddpsi) = self.model.eval(k.r);
            let i = self.log_i(k.r).exp();
            let row = [k.r, psi, dpsi, ddpsi, i, k.y[0], k.y[1]];
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow {
                    max_radius: self.max_representable_radius(),
                });
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Θ(s) by direct quadrature of exp(L(t) − L(s)) on [0, s].
pub fn theta_pointwise(model: &ModelFunction, n: usize, s: f64, tol: f64) -> Result<f64> {
    Ok(theta_with_error(model, n, s, tol)?.0)
}

fn dlambda(model: &ModelFunction, nm1: f64, r: f64) -> f64 {
    let pt = model.point(r);
    nm1 * (pt.curvature - pt.dlog * pt.dlog)
}

/// Θ(s) and a relative error estimate. Deep in the boundary layer the
/// quasi-static expansion of Θ' = 1 − λΘ,
/// Θ ≈ 1/λ + λ'/λ³ + (3λ'² − λλ'')/λ⁵,
/// replaces quadrature once it is more accurate than exp(L(t) − L(s)),
/// which carries the roundoff of L(s).
fn theta_with_error(model: &ModelFunction, n: usize, s: f64, tol: f64) -> Result<(f64, f64)> {
    let nm1 = n as f64 - 1.0;
    let pt = model.point(s);
    let ls = nm1 * pt.log_psi;
    let lam = nm1 * pt.dlog;
    let quad_noise = 64.0 * f64::EPSILON * ls.abs();
    if lam * s > 50.0 {
        let d1 = nm1 * (pt.curvature - pt.dlog * pt.dlog);
        let h = 1e-3 * s.min(1.0 / lam.sqrt());
        let d2 = (dlambda(model, nm1, s + h) - dlambda(model, nm1, s - h)) / (2.0 * h);
        let delta = d1.abs() / (lam * lam);
        let eta = d2.abs() / (lam * lam * lam);
        let asym_err = 15.0 * delta.powi(3) + 11.0 * delta * eta + 64.0 * f64::EPSILON;
        if lam * s > 1e6 || asym_err <= tol.max(quad_noise) {
            let l2 = lam * lam;
            let value = 1.0 / lam + d1 / (l2 * lam) + (3.0 * d1 * d1 - lam * d2) / (l2 * l2 * lam);
            return Ok((value, asym_err));
        }
    }
    let mut breaks = vec![0.0];
    for k in [64.0, 16.0, 4.0, 1.0] {
        let b = s - k / lam;
        if b > *breaks.last().unwrap() && b < s {
            breaks.push(b);
        }
    }
    breaks.push(s);
    let f = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (nm1 * model.point(t).log_psi - ls).exp()
        }
    };
    let tol = tol.max(quad_noise);
    Ok((quadrature::integrate_pieces(f, &breaks, 1e-300, tol)?.value, tol))
}

const MAX_TAIL_BLOCKS: usize = 60;

/// ∫_from^∞ Θ^{1/(p−1)} summed over dyadic blocks with a geometric
/// remainder estimate. `Ok(None)` means no convergence could be certified.
pub fn tail_integral(model: &ModelFunction, n: usize, p: f64, from: f64, tol: f64) -> Result<Option<Tail>> {
    let beta = 1.0 / (p - 1.0);
    // the outer rule must sit well above the noise of the inner one
    let inner = (1e-3 * tol).max(1e-14);
    let mut total = 0.0;
    let mut qerr = 0.0;
    let mut blocks: Vec<f64> = Vec::new();
    let mut noise_max: f64 = 0.0;
    let mut a = from;
    for _ in 0..MAX_TAIL_BLOCKS {
        let b = 2.0 * a;
        if b > model.valid_to() {
            return Ok(None);
        }
        let mut failed = None;
        let mut noise: f64 = 0.0;
        for x in [a, b] {
            noise = noise.max(beta * theta_with_error(model, n, x, inner)?.1);
        }
        let res = quadrature::integrate(
            |s| match theta_with_error(model, n, s, inner) {
                Ok((th, _)) => th.powf(beta),
                Err(e) => {
                    failed = Some(e);
                    f64::NAN
                }
            },
            a,
            b,
            1e-300,
            (0.01 * tol).max(1e-12).max(4.0 * noise),
            400,
        );
        if let Some(e) = failed {
            return Err(e);
        }
        let res = res?;
        total += res.value;
        qerr += res.error + noise * res.value;
        noise_max = noise_max.max(noise);
        blocks.push(res.value);
        a = b;
        let k = blocks.len();
        if k >= 3 {
            let r1 = blocks[k - 1] / blocks[k - 2];
            let r0 = blocks[k - 2] / blocks[k - 3];
            if r1 < 0.98 && r0 < 0.98 {
                let remainder = blocks[k - 1] * r1 / (1.0 - r1);
                let uncertainty = remainder * (r1 - r0).abs() / (1.0 - r1) + qerr;
                if uncertainty <= (0.1 * tol).max(10.0 * noise_max) * (total + remainder) {
                    return Ok(Some(Tail {
                        from,
                        value: total + remainder,
                        error: uncertainty,
                    }));
                }
            }
            if k >= 6 && r1 >= 1.0 && r0 >= 1.0 {
                return Ok(None);
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Completeness {
    #[serde(rename = "pSC")]
    PSC,
    #[serde(rename = "pSI")]
    PSI,
    Inconclusive,
}

impl fmt::Display for Completeness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Completeness::PSC => "pSC",
            Completeness::PSI => "pSI",
            Completeness::Inconclusive => "Inconclusive",
        })
    }
}

/// Growth regime of ψ'/ψ at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum RegimeTag {
    HpAdd1 {
        gamma: f64,
        ell: f64,
    },
    HpAdd2 {
        growth: f64,
        h: f64,
    },
    /// Finite-horizon proxy for the liminf condition; always horizon-limited.
    HpFail {
        proxy: f64,
        power_like: bool,
        gamma: f64,
    },
    Unknown,
}

impl RegimeTag {
    /// True when the sharp asymptotic law for Q is proven to hold.
    pub fn admits_sharp_asymptotics(&self) -> bool {
        matches!(self, RegimeTag::HpAdd1 { .. } | RegimeTag::HpAdd2 { .. })
    }
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeTag::HpAdd1 { gamma, ell } => write!(f, "hp-add-1(gamma={gamma:.4}, ell={ell:.4})"),
            RegimeTag::HpAdd2 { .. } => write!(f, "hp-add-2"),
            RegimeTag::HpFail {
                power_like: true,
                gamma,
                ..
            } => {
                write!(f, "hp-fail(power-like, gamma={gamma:.4}, horizon-limited)")
            }
            RegimeTag::HpFail { proxy, .. } => write!(f, "hp-fail(proxy={proxy:.4}, horizon-limited)"),
            RegimeTag::Unknown => write!(f, "unknown"),
        }
    }
}

fn log_slope(model: &ModelFunction, a: f64, b: f64) -> f64 {
    (model.point(b).dlog / model.point(a).dlog).ln() / (b / a).ln()
}

/// (ψ/ψ')·(ln(ψ'/ψ))' = ((ψ''/ψ) − g²)/g².
fn hp2_quantity(model: &ModelFunction, r: f64) -> f64 {
    let pt = model.point(r);
    (pt.curvature - pt.dlog * pt.dlog) / (pt.dlog * pt.dlog)
}

/// Classify the growth of ψ'/ψ from two dyadic windows ending at the horizon.
pub fn detect_regime(profile: &GeometryProfile) -> Result<RegimeTag> {
    let model = profile.model();
    let r = profile.horizon();
    let s1 = log_slope(model, r / 4.0, r / 2.0);
    let s2 = log_slope(model, r / 2.0, r);
    let g = model.point(r).dlog;
    if s1 > 0.1 && s2 > 0.1 {
        let h1 = hp2_quantity(model, r / 2.0);
        let h2 = hp2_quantity(model, r);
        if h2.abs() < 0.1 && h2.abs() <= h1.abs() {
            return Ok(RegimeTag::HpAdd2 { growth: s2, h: h2 });
        }
    }
    let (g1, g2) = (-s1, -s2);
    let stable = (g1 - g2).abs() < 0.1;
    let proxy = audit_grid(r / 4.0, r, 16)
        .into_iter()
        .map(|x| profile.fail_proxy(x))
        .fold(f64::INFINITY, f64::min);
    if stable && (-0.05..=0.9).contains(&g2) {
        let gamma = g2.max(0.0);
        return Ok(RegimeTag::HpAdd1 {
            gamma,
            ell: r.powf(gamma) * g,
        });
    }
    if stable && (0.9..1.1).contains(&g2) {
        return Ok(RegimeTag::HpFail {
            proxy,
            power_like: true,
            gamma: g2,
        });
    }
    let p_half = profile.fail_proxy(r / 2.0);
    let p_end = profile.fail_proxy(r);
    if proxy > 0.01 && p_end > 0.9 * p_half {
        return Ok(RegimeTag::HpFail {
            proxy,
            power_like: false,
            gamma: g2,
        });
    }
    Err(Error::AmbiguousRegime(format!(
        "log-slopes of psi'/psi {s1:.4} and {s2:.4} over the last two windows, proxy {proxy:.4}"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessVerdict {
    pub verdict: Completeness,
    pub horizon: f64,
    pub j_horizon: f64,
    pub j_half: f64,
    pub j_quarter: f64,
    /// log2 of the ratio of the last two dyadic increments of J.
    pub growth_exponent: f64,
    pub tail: Option<Tail>,
    /// J(R/2) + tail from R/2, the second route to J(∞).
    pub j_inf_half: Option<f64>,
    pub j_inf: Option<f64>,
    pub j_inf_extrapolated: Limit,
    pub regime: RegimeTag,
}

pub const CONVERGENCE_TOL: f64 = 1e-6;
pub const GROWTH_TOL: f64 = 0.05;

/// Decide integrability of Θ^{1/(p−1)} from the tabulated profile.
pub fn classify_completeness(profile: &GeometryProfile) -> Result<CompletenessVerdict> {
    let r = profile.horizon();
    let (jq, jh, jr) = (profile.j(r / 4.0), profile.j(r / 2.0), profile.j(r));
    let d_prev = jh - jq;
    let d_last = jr - jh;
    let growth_exponent = (d_last / d_prev).log2();
    let tail = profile.tail();
    let half = match tail {
        Some(_) => tail_integral(profile.model(), profile.n(), profile.p(), r / 2.0, profile.tol())?,
        None => None,
    };
    let j_inf = profile.j_inf();
    let j_inf_half = half.map(|t| jh + t.value);
    let regime = detect_regime(profile).unwrap_or(RegimeTag::Unknown);
    let mut verdict = Completeness::Inconclusive;
    if let (Some(a), Some(b), Some(t), Some(th)) = (j_inf, j_inf_half, tail, half) {
        if (a - b).abs() <= CONVERGENCE_TOL * a.abs() && t.value < th.value {
            verdict = Completeness::PSI;
        }
    }
    if verdict == Completeness::Inconclusive
        && tail.is_none()
        && d_last / d_prev >= 1.0 - GROWTH_TOL
        && jr / jh >= 2.0 * (1.0 - GROWTH_TOL)
    {
        verdict = Completeness::PSC;
    }
    Ok(CompletenessVerdict {
        verdict,
        horizon: r,
        j_horizon: jr,
        j_half: jh,
        j_quarter: jq,
        growth_exponent,
        tail,
        j_inf_half,
        j_inf,
        j_inf_extrapolated: richardson(jq, jh, jr),
        regime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_model, ModelKind};

    fn m(s: &str) -> ModelFunction {
        make_model(&s.parse::<ModelKind>().unwrap()).unwrap()
    }

    #[test]
    fn euclidean_theta_is_r_over_n() {
        let prof = GeometryProfile::build(&m("euclidean"), 3, 2.0, 8.0, 1e-10).unwrap();
        assert!((prof.theta(2.0) - 2.0 / 3.0).abs() < 1e-9);
        for r in audit_grid(1e-3, 8.0, 64) {
            assert!((prof.theta(r) - r / 3.0).abs() <= 1e-9 * r);
            assert!((prof.j(r) - r * r / 6.0).abs() <= 1e-8 * r * r);
        }
        assert!(prof.tail().is_none());
    }

    #[test]
    fn hyperbolic_theta_limit() {
        let prof = GeometryProfile::build_without_tail(&m("hyperbolic"), 3, 2.0, 30.0, 1e-10).unwrap();
        assert!((prof.theta(30.0) - 0.5).abs() < 1e-4);
        // exact: ∫ sinh² / sinh² = (sinh 2r / 4 − r/2) / sinh² r
        let r: f64 = 3.0;
        let exact = ((2.0 * r).sinh() / 4.0 - r / 2.0) / r.sinh().powi(2);
        assert!((prof.theta(r) - exact).abs() < 1e-9);
    }

    #[test]
    fn pointwise_route_agrees_with_ode() {
        for s in [
            "hyperbolic",
            "exppower:c=1,m=3",
            "powerlike:k=3",
            "expgamma:c=1,gamma=0.5",
        ] {
            let model = m(s);
            let prof = GeometryProfile::build_without_tail(&model, 3, 2.0, 6.0, 1e-10).unwrap();
            for r in [0.01, 0.5, 2.0, 5.5] {
                let direct = theta_pointwise(&model, 3, r, 1e-12).unwrap();
                assert!((direct - prof.theta(r)).abs() <= 1e-8 * direct, "{s} r={r}");
            }
        }
    }

    #[test]
    fn exppower_tail_matches_asymptotic_law() {
        let model = m("exppower:c=1,m=3");
        let prof = GeometryProfile::build(&model, 3, 2.0, 5.0, 1e-10).unwrap();
        let t = prof.tail_j(5.0).expect("tail converges");
        // Θ ~ 1/(3(n−1)r²) ⇒ tail(R) ~ 1/(6R) to leading order
        assert!((t * 30.0 - 1.0).abs() < 0.02, "tail {t}");
        let v = classify_completeness(&prof).unwrap();
        assert_eq!(v.verdict, Completeness::PSI);
    }

    #[test]
    fn classify_catalog() {
        let v = classify_completeness(&GeometryProfile::build(&m("euclidean"), 3, 2.0, 32.0, 1e-9).unwrap()).unwrap();
        assert_eq!(v.verdict, Completeness::PSC);
        assert!(matches!(v.regime, RegimeTag::HpFail { power_like: true, .. }));
        for p in [1.5, 2.0, 2.5] {
            let v =
                classify_completeness(&GeometryProfile::build(&m("hyperbolic"), 3, p, 32.0, 1e-9).unwrap()).unwrap();
            assert_eq!(v.verdict, Completeness::PSC, "p = {p}");
        }
    }

    #[test]
    fn regimes() {
        let prof = |s: &str, r: f64| GeometryProfile::build_without_tail(&m(s), 3, 2.0, r, 1e-9).unwrap();
        match detect_regime(&prof("hyperbolic", 32.0)).unwrap() {
            RegimeTag::HpAdd1 { gamma, ell } => {
                assert!(gamma.abs() < 1e-6 && (ell - 1.0).abs() < 1e-6);
            }
            other => panic!("{other}"),
        }
        assert!(matches!(
            detect_regime(&prof("exppower:c=1,m=2", 16.0)).unwrap(),
            RegimeTag::HpAdd2 { .. }
        ));
        assert!(matches!(
            detect_regime(&prof("powerlike:k=3", 64.0)).unwrap(),
            RegimeTag::HpFail { power_like: true, .. }
        ));
        match detect_regime(&prof("expgamma:c=1,gamma=0.5", 4096.0)).unwrap() {
            RegimeTag::HpAdd1 { gamma, .. } => assert!((gamma - 0.5).abs() < 0.1, "{gamma}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn hp2_quantity_oracle() {
        let model = m("exppower:c=1,m=2");
        for r in [4.0, 8.0, 16.0] {
            let h = hp2_quantity(&model, r);
            assert!((h * 2.0 * r * r - 1.0).abs() < 0.1, "r={r} h={h}");
        }
    }

    #[test]
    fn continuation_reproduces_prefix() {
        let model = m("hyperbolic");
        let a = GeometryProfile::build_without_tail(&model, 3, 2.0, 10.0, 1e-9).unwrap();
        let b = a.continue_with(&model, 6.0, 20.0).unwrap();
        let shared: Vec<f64> = a.knots().filter(|&r| r < 6.0).chain([6.0]).collect();
        for r in shared {
            assert_eq!(a.theta(r), b.theta(r));
            assert_eq!(a.j(r), b.j(r));
        }
        let full = GeometryProfile::build_without_tail(&model, 3, 2.0, 20.0, 1e-9).unwrap();
        assert!((b.j(20.0) - full.j(20.0)).abs() < 1e-8 * full.j(20.0));
    }
}
