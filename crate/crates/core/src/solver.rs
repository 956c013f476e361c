//! Radial initial value problem (ψ^{n−1}|u'|^{p−2}u')' = −ψ^{n−1}u^q,
//! u(0) = α, u'(0) = 0.
//!
//! The integrated state is (u, v) with v = |u'|^{p−2}u' = w/ψ^{n−1}:
//!
//! ```text
//! u' = −(−v)^{1/(p−1)},   v' = −(n−1)(ψ'/ψ) v − u^q
//! ```
//!
//! so the flux w = ψ^{n−1}v is only formed on output, in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelFunction;
use crate::ode::{self, EndMode, Flow, Knot, OdeError, StepControl, System, Termination, Trajectory};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
}

impl Problem {
    pub fn new(n: usize, p: f64, q: f64, alpha: f64) -> Result<Self> {
        let prob = Self { n, p, q, alpha };
        prob.validate()?;
        Ok(prob)
    }

    /// q = p* − 1.
    pub fn critical(n: usize, p: f64, alpha: f64) -> Result<Self> {
        Self::new(n, p, p_star(n, p) - 1.0, alpha)
    }

    pub fn p_star(&self) -> f64 {
        p_star(self.n, self.p)
    }

    pub fn is_critical(&self) -> bool {
        (self.q - (self.p_star() - 1.0)).abs() <= 1e-12 * self.q
    }

    /// 1/(p−1)
    pub fn beta(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if !(self.p > 1.0 && self.p < self.n as f64) {
            return bad(format!("p must lie in (1, n), got {}", self.p));
        }
        let qc = self.p_star() - 1.0;
        if !(self.q.is_finite() && self.q >= qc * (1.0 - 1e-12)) {
            return bad(format!("q must be >= p* - 1 = {qc}, got {}", self.q));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        Ok(())
    }

    /// Startup radius 1e−4·max(1, α^{−(q+1−p)/p}).
    pub fn default_startup_radius(&self) -> f64 {
        1e-4 * self.alpha.powf(-(self.q + 1.0 - self.p) / self.p).max(1.0)
    }
}

pub fn p_star(n: usize, p: f64) -> f64 {
    n as f64 * p / (n as f64 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub r_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None` selects [`Problem::default_startup_radius`].
    pub startup_radius: Option<f64>,
    pub max_steps: usize,
    pub h_max: f64,
}

impl SolverConfig {
    pub fn new(r_max: f64) -> Self {
        Self {
            r_max,
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            startup_radius: None,
            max_steps: 5_000_000,
            h_max: 0.25,
        }
    }

    pub fn with_tol(self, rel_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol: 1e-4 * rel_tol,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        if !(self.r_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "r_max must be > 0, got {}",
                self.r_max
            )));
        }
        if let Some(r0) = self.startup_radius {
            if !(r0 > 0.0 && r0 < 1e-1 && r0 < self.r_max) {
                return Err(Error::InvalidParameter(format!(
                    "startup radius {r0} must satisfy 0 < r0 << 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    ReachedHorizon,
    /// u fell below 1e−12·α.
    Underflow,
    /// An observer requested the stop (stage triggers).
    Stopped,
}

/// Relative underflow floor.
pub const UNDERFLOW: f64 = 1e-12;

struct Radial<'a> {
    model: &'a ModelFunction,
    nm1: f64,
    beta: f64,
    q: f64,
}

impl System<2> for Radial<'_> {
    fn rhs(&self, r: f64, y: &[f64; 2]) -> [f64; 2] {
        let [u, v] = *y;
        let du = if v < 0.0 { -((-v).ln() * self.beta).exp() } else { 0.0 };
        let lam = self.nm1 * self.model.point(r).dlog;
        [du, -lam * v - u.powf(self.q)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Startup {
    pub r0: f64,
    pub u0: f64,
    pub v0: f64,
    /// ln(−w(r0)) with w = ψ^{n−1} v.
    pub log_neg_w0: f64,
    /// Relative change of v(r0) produced by the Picard correction.
    pub correction: f64,
    pub halvings: usize,
}

const STARTUP_NODES: usize = 16;

fn theta_small(model: &ModelFunction, nm1: f64, s: f64, gl: &GaussLegendre) -> f64 {
    let ls = nm1 * model.point(s).log_psi;
    gl.integrate(|t| (nm1 * model.point(t).log_psi - ls).exp(), 0.0, s)
}

fn startup_at(prob: &Problem, model: &ModelFunction, r0: f64, gl: &GaussLegendre) -> (f64, f64, f64) {
    let nm1 = prob.n as f64 - 1.0;
    let beta = prob.beta();
    let aq = prob.alpha.powf(prob.q);
    // leading order v ≈ −α^q Θ, u ≈ α − ∫ (α^q Θ)^β
    let u_lead = |s: f64| prob.alpha - gl.integrate(|t| (aq * theta_small(model, nm1, t, gl)).powf(beta), 0.0, s);
    // one Picard step on the flux
    let v_corr = |s: f64| {
        let ls = nm1 * model.point(s).log_psi;
        -gl.integrate(
            |t| (nm1 * model.point(t).log_psi - ls).exp() * u_lead(t).max(0.0).powf(prob.q),
            0.0,
            s,
        )
    };
    let v0 = -aq * theta_small(model, nm1, r0, gl);
    let v1 = v_corr(r0);
    let u1 = prob.alpha - gl.integrate(|t| (-v_corr(t)).max(0.0).powf(beta), 0.0, r0);
    (u1, v1, ((v1 - v0) / v0).abs())
}

/// Series start at r0 from the leading flux law plus one Picard correction,
/// halving r0 until α − u(r0) < 1e−3·α and the correction is small.
pub fn series_startup(prob: &Problem, model: &ModelFunction, r0: f64) -> Result<Startup> {
    prob.validate()?;
    let gl = GaussLegendre::new(STARTUP_NODES);
    let floor = 1e-12f64.max(1e-8 * r0);
    let mut r = r0;
    let mut halvings = 0;
    loop {
        let (u, v, correction) = startup_at(prob, model, r, &gl);
        let drop_ok = prob.alpha - u < 1e-3 * prob.alpha;
        if drop_ok && correction < 1e-2 && u > 0.0 && u < prob.alpha && v < 0.0 {
            let log_neg_w0 = (-v).ln() + model.log_weight(prob.n, r);
            return Ok(Startup {
                r0: r,
                u0: u,
                v0: v,
                log_neg_w0,
                correction,
                halvings,
            });
        }
        r *= 0.5;
        halvings += 1;
        if r < floor {
            return Err(Error::StartupFailure(format!(
                "Picard correction {correction:.3e} and drop {:.3e} did not settle above r0 = {floor:e}",
                (prob.alpha - u) / prob.alpha
            )));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub problem: Problem,
    pub config: SolverConfig,
    pub startup: Startup,
    pub termination: TerminationReason,
    pub steps: usize,
}

/// Trajectory on an adaptive grid with monotone dense output.
#[derive(Debug, Clone)]
pub struct RadialSolution {
    traj: Trajectory<2>,
    model: ModelFunction,
    pub meta: SolutionMeta,
}

fn control(prob: &Problem, cfg: &SolverConfig, v0_scale: f64) -> StepControl<2> {
    StepControl {
        rel_tol: cfg.rel_tol,
        abs_tol: [cfg.abs_tol * prob.alpha, cfg.abs_tol * v0_scale],
        h_init: 1e-2 * cfg.startup_radius.unwrap_or_else(|| prob.default_startup_radius()),
        h_min: 1e-16,
        h_max: cfg.h_max,
        max_steps: cfg.max_steps,
    }
}

/// Integrate from the pole to `cfg.r_max`.
pub fn integrate(prob: &Problem, model: &ModelFunction, cfg: &SolverConfig) -> Result<RadialSolution> {
    integrate_observed(prob, model, cfg, |_| Flow::Continue)
}

/// As [`integrate`], with an observer that sees each accepted knot
/// (r, [u, v]) and may stop the run.
pub fn integrate_observed<O: FnMut(&Knot<2>) -> Flow>(
    prob: &Problem,
    model: &ModelFunction,
    cfg: &SolverConfig,
    observer: O,
) -> Result<RadialSolution> {
    prob.validate()?;
    cfg.validate()?;
    if cfg.r_max > model.valid_to() {
        return Err(Error::OutOfRange {
            radius: cfg.r_max,
            limit: model.valid_to(),
        });
    }
    let r0 = cfg.startup_radius.unwrap_or_else(|| prob.default_startup_radius());
    let startup = series_startup(prob, model, r0)?;
    let sys = Radial {
        model,
        nm1: prob.n as f64 - 1.0,
        beta: prob.beta(),
        q: prob.q,
    };
    let y0 = [startup.u0, startup.v0];
    let traj = Trajectory::new(Knot {
        r: startup.r0,
        y: y0,
        dy: sys.rhs(startup.r0, &y0),
    });
    let meta = SolutionMeta {
        problem: *prob,
        config: *cfg,
        startup,
        termination: TerminationReason::ReachedHorizon,
        steps: 0,
    };
    let mut sol = RadialSolution {
        traj,
        model: model.clone(),
        meta,
    };
    sol.advance(cfg.r_max, observer)?;
    Ok(sol)
}

impl RadialSolution {
    fn v_scale(&self) -> f64 {
        let s = &self.meta.startup;
        (-s.v0 / s.r0).max(f64::MIN_POSITIVE)
    }

    fn advance<O: FnMut(&Knot<2>) -> Flow>(&mut self, r_max: f64, mut observer: O) -> Result<()> {
        let prob = self.meta.problem;
        let sys = Radial {
            model: &self.model,
            nm1: prob.n as f64 - 1.0,
            beta: prob.beta(),
            q: prob.q,
        };
        let ctl = control(&prob, &self.meta.config, self.v_scale());
        let floor = UNDERFLOW * prob.alpha;
        let before = self.traj.knots.len();
        let mut underflow = false;
        let res = ode::integrate(
            &sys,
            &mut self.traj,
            r_max,
            EndMode::Exact,
            &ctl,
            |_, y| y[0] > 0.0 && y[1] < 0.0,
            |k| {
                if k.y[0] < floor {
                    underflow = true;
                    return Flow::Stop;
                }
                observer(k)
            },
        );
        self.meta.steps += self.traj.knots.len() - before;
        self.meta.config.r_max = r_max;
        match res {
            Ok(Termination::ReachedEnd) => self.meta.termination = TerminationReason::ReachedHorizon,
            Ok(Termination::Stopped) => {
                self.meta.termination = if underflow {
                    TerminationReason::Underflow
                } else {
                    TerminationReason::Stopped
                }
            }
            Err(OdeError::StepCollapse { r, .. }) | Err(OdeError::TooManySteps { r }) => {
                let last = self.traj.last();
                let _ = r;
                return Err(Error::StepSizeCollapse {
                    radius: last.r,
                    u: last.y[0],
                    v: last.y[1],
                });
            }
        }
        for w in self.traj.knots[before.saturating_sub(1)..].windows(2) {
            if !(w[1].y[0] <= w[0].y[0]) || !(w[1].y[1] < 0.0) || !(w[1].y[0] > 0.0) {
                return Err(Error::NonMonotone(w[1].r));
            }
        }
        Ok(())
    }

    /// Continue from the knot at `from` (which must be a grid radius) on a
    /// model that agrees with the current one on [0, from].
    pub fn continue_with<O: FnMut(&Knot<2>) -> Flow>(
        &self,
        model: &ModelFunction,
        from: f64,
        r_max: f64,
        observer: O,
    ) -> Result<Self> {
        let idx = self
            .traj
            .knots
            .iter()
            .position(|k| k.r == from)
            .ok_or_else(|| Error::OutOfRange {
                radius: from,
                limit: self.r_end(),
            })?;
        if r_max > model.valid_to() {
            return Err(Error::OutOfRange {
                radius: r_max,
                limit: model.valid_to(),
            });
        }
        let mut next = Self {
            traj: self.traj.clone(),
            model: model.clone(),
            meta: self.meta.clone(),
        };
        next.traj.knots.truncate(idx + 1);
        next.advance(r_max, observer)?;
        Ok(next)
    }

    pub fn model(&self) -> &ModelFunction {
        &self.model
    }

    pub fn problem(&self) -> &Problem {
        &self.meta.problem
    }

    pub fn len(&self) -> usize {
        self.traj.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj.knots.is_empty()
    }

    pub fn r_start(&self) -> f64 {
        self.traj.start()
    }

    pub fn r_end(&self) -> f64 {
        self.traj.end()
    }

    pub fn knots(&self) -> &[Knot<2>] {
        &self.traj.knots
    }

    pub fn grid(&self) -> Vec<f64> {
        self.traj.knots.iter().map(|k| k.r).collect()
    }

    /// u' from v.
    pub fn du_from_v(&self, v: f64) -> f64 {
        if v < 0.0 {
            -((-v).ln() * self.meta.problem.beta()).exp()
        } else {
            0.0
        }
    }

    /// ln(−w) = ln(−v) + (n−1) ln ψ.
    pub fn log_neg_w(&self, r: f64, v: f64) -> f64 {
        (-v).ln() + self.model.log_weight(self.meta.problem.n, r)
    }

    /// Flux w = ψ^{n−1}|u'|^{p−2}u'; may overflow to −∞.
    pub fn w_from(&self, r: f64, v: f64) -> f64 {
        -self.log_neg_w(r, v).exp()
    }

    /// (u, v) at r on [0, r_end].
    pub fn state(&self, r: f64) -> Result<(f64, f64)> {
        if !(r >= 0.0) || r > self.r_end() {
            return Err(Error::OutOfRange {
                radius: r,
                limit: self.r_end(),
            });
        }
        let s = &self.meta.startup;
        let alpha = self.meta.problem.alpha;
        if r == 0.0 {
            return Ok((alpha, 0.0));
        }
        if r < s.r0 {
            let t = r / s.r0;
            let beta = self.meta.problem.beta();
            return Ok((alpha - (alpha - s.u0) * t.powf(beta + 1.0), s.v0 * t));
        }
        let i = self.traj.segment(r);
        let (a, b) = (&self.traj.knots[i], &self.traj.knots[(i + 1).min(self.len() - 1)]);
        if r == a.r {
            return Ok((a.y[0], a.y[1]));
        }
        if r == b.r {
            return Ok((b.y[0], b.y[1]));
        }
        let v = self.traj.eval_on(i, r).0[1];
        Ok((monotone_cubic(a.r, a.y[0], a.dy[0], b.r, b.y[0], b.dy[0], r), v))
    }

    /// Unlimited Hermite (u, v) on [r_start, r_end]; C¹ across knots.
    pub fn smooth_state(&self, r: f64) -> (f64, f64) {
        let y = self.traj.eval(r).0;
        (y[0], y[1])
    }

    /// Hermite (u, v) on grid interval `i`.
    pub fn state_on(&self, i: usize, r: f64) -> (f64, f64) {
        let y = self.traj.eval_on(i, r).0;
        (y[0], y[1])
    }

    /// (u, u', w) at r.
    pub fn evaluate(&self, r: f64) -> Result<(f64, f64, f64)> {
        let (u, v) = self.state(r)?;
        if r == 0.0 {
            return Ok((u, 0.0, 0.0));
        }
        Ok((u, self.du_from_v(v), self.w_from(r, v)))
    }

    /// Rows (r, u, u', w) on the grid.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        self.traj
            .knots
            .iter()
            .map(|k| [k.r, k.y[0], self.du_from_v(k.y[1]), self.w_from(k.r, k.y[1])])
            .collect()
    }

    /// Largest relative flux-law residual over consecutive grid intervals,
    /// in the scaled form v_b − v_a e^{L_a−L_b} + ∫ e^{L−L_b} u^q.
    pub fn flux_residual(&self) -> f64 {
        let gl = GaussLegendre::new(8);
        let prob = self.meta.problem;
        let mut worst: f64 = 0.0;
        for (i, w) in self.traj.knots.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            let lb = self.model.log_weight(prob.n, b.r);
            let la = self.model.log_weight(prob.n, a.r);
            let src = gl.integrate(
                |s| {
                    let u = self.traj.eval_on(i, s).0[0];
                    (self.model.log_weight(prob.n, s) - lb).exp() * u.powf(prob.q)
                },
                a.r,
                b.r,
            );
            let res = b.y[1] - a.y[1] * (la - lb).exp() + src;
            worst = worst.max(res.abs() / b.y[1].abs());
        }
        worst
    }
}

/// Cubic Hermite through (x0, y0, m0), (x1, y1, m1) with the
/// Fritsch-Carlson limiter applied to the slopes.
pub fn monotone_cubic(x0: f64, y0: f64, m0: f64, x1: f64, y1: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let delta = (y1 - y0) / h;
    let (mut m0, mut m1) = (m0, m1);
    if delta == 0.0 {
        m0 = 0.0;
        m1 = 0.0;
    } else {
        let a = m0 / delta;
        let b = m1 / delta;
        if a < 0.0 {
            m0 = 0.0;
        }
        if b < 0.0 {
            m1 = 0.0;
        }
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m0 = tau * a * delta;
            m1 = tau * b * delta;
        }
    }
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * m1
}
