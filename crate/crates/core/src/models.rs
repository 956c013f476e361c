//! Model functions ψ of rotationally symmetric Cartan-Hadamard manifolds.
//!
//! Everything is evaluated in log space: a [`ModelPoint`] carries ln ψ,
//! the log-derivative g = ψ'/ψ and the curvature ratio κ = ψ''/ψ. The raw
//! triple (ψ, ψ', ψ'') is available through [`ModelFunction::eval`] but
//! overflows quickly for the exponential families.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, EndMode, Flow, Knot, StepControl, System, Trajectory};

/// Closed-form and glued model families, serialized as `{kind, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum ModelKind {
    Euclidean {},
    Hyperbolic {},
    ExpPower { c: f64, m: u32 },
    PowerLike { k: f64 },
    ExpGamma { c: f64, gamma: f64 },
    Glued(GluedSpec),
}

/// One piece of a glued model. `Model` adopts the curvature ratio of a
/// closed form; `Exponential` drives ψ'/ψ towards `rate`; `Linear` makes ψ
/// asymptotically affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "piece", rename_all = "lowercase")]
pub enum GluePiece {
    Model { model: ModelKind },
    Exponential { rate: f64 },
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluedSpec {
    /// `pieces[0]` applies from the pole; `pieces[j]` from `joins[j - 1]`.
    pub pieces: Vec<GluePiece>,
    pub joins: Vec<f64>,
    pub width: f64,
    pub horizon: f64,
}

/// Log-space evaluation of a model at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPoint {
    pub log_psi: f64,
    /// ψ'/ψ
    pub dlog: f64,
    /// ψ''/ψ
    pub curvature: f64,
}

impl ModelPoint {
    pub fn log_dpsi(&self) -> f64 {
        self.log_psi + self.dlog.ln()
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn closed_point(kind: &ModelKind, r: f64) -> ModelPoint {
    if r <= 0.0 {
        let curvature = match *kind {
            ModelKind::Hyperbolic {} => 1.0,
            ModelKind::PowerLike { k } => 3.0 * (k - 1.0),
            ModelKind::ExpGamma { c, gamma } => 3.0 * c * (1.0 - gamma),
            ModelKind::ExpPower { c, m: 2 } => 6.0 * c,
            _ => 0.0,
        };
        return ModelPoint {
            log_psi: f64::NEG_INFINITY,
            dlog: f64::INFINITY,
            curvature,
        };
    }
    match *kind {
        ModelKind::Euclidean {} => ModelPoint {
            log_psi: r.ln(),
            dlog: 1.0 / r,
            curvature: 0.0,
        },
        ModelKind::Hyperbolic {} => ModelPoint {
            log_psi: r + (-(-2.0 * r).exp_m1() / 2.0).ln(),
            dlog: 1.0 / r.tanh(),
            curvature: 1.0,
        },
        ModelKind::ExpPower { c, m } => {
            let m = m as f64;
            let rm = r.powf(m);
            let cm = c * m * r.powf(m - 2.0);
            ModelPoint {
                log_psi: r.ln() + c * rm,
                dlog: 1.0 / r + cm * r,
                curvature: cm * (m + 1.0 + c * m * rm),
            }
        }
        ModelKind::PowerLike { k } => {
            let s = 1.0 + r * r;
            ModelPoint {
                log_psi: r.ln() + 0.5 * (k - 1.0) * (r * r).ln_1p(),
                dlog: 1.0 / r + (k - 1.0) * r / s,
                curvature: (k - 1.0) * (3.0 + k * r * r) / (s * s),
            }
        }
        ModelKind::ExpGamma { c, gamma } => {
            let a = 0.5 * (1.0 - gamma);
            let l = (r * r).ln_1p();
            let phi = c * (a * l).exp_m1();
            let s = 1.0 + r * r;
            let sa2 = ((a - 2.0) * l).exp();
            // φ'/r and φ''
            let dphi_r = 2.0 * a * c * sa2 * s;
            let ddphi = 2.0 * a * c * sa2 * (1.0 + (2.0 * a - 1.0) * r * r);
            let dphi = dphi_r * r;
            ModelPoint {
                log_psi: r.ln() + phi,
                dlog: 1.0 / r + dphi,
                curvature: 2.0 * dphi_r + dphi * dphi + ddphi,
            }
        }
        ModelKind::Glued(_) => unreachable!("glued models are evaluated through their segments"),
    }
}

fn piece_curvature(piece: &GluePiece, r: f64) -> f64 {
    match piece {
        GluePiece::Model { model } => closed_point(model, r).curvature,
        GluePiece::Exponential { rate } => rate * rate,
        GluePiece::Linear => 0.0,
    }
}

struct Blend<'a> {
    prev: &'a GluePiece,
    next: &'a GluePiece,
    start: f64,
    width: f64,
}

impl Blend<'_> {
    fn curvature(&self, r: f64) -> f64 {
        let b = smoothstep((r - self.start) / self.width);
        let lo = if b < 1.0 { piece_curvature(self.prev, r) } else { 0.0 };
        let hi = if b > 0.0 { piece_curvature(self.next, r) } else { 0.0 };
        (1.0 - b) * lo + b * hi
    }
}

impl System<2> for Blend<'_> {
    fn rhs(&self, r: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], self.curvature(r) - y[1] * y[1]]
    }
}

#[derive(Debug)]
struct Glued {
    spec: GluedSpec,
    /// `segments[j]` covers [joins[j], joins[j + 1]) with state (ln ψ, ψ'/ψ).
    segments: Vec<Trajectory<2>>,
}

impl Glued {
    fn point(&self, r: f64) -> ModelPoint {
        let j = self.spec.joins.partition_point(|&x| x <= r);
        if j == 0 {
            let GluePiece::Model { model } = &self.spec.pieces[0] else {
                unreachable!()
            };
            return closed_point(model, r);
        }
        let (y, _) = self.segments[j - 1].eval(r);
        let blend = Blend {
            prev: &self.spec.pieces[j - 1],
            next: &self.spec.pieces[j],
            start: self.spec.joins[j - 1],
            width: self.spec.width,
        };
        ModelPoint {
            log_psi: y[0],
            dlog: y[1],
            curvature: blend.curvature(r),
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Closed,
    Glued(Arc<Glued>),
}

/// An evaluable model function. Cheap to clone and safe to share.
#[derive(Debug, Clone)]
pub struct ModelFunction {
    kind: ModelKind,
    repr: Repr,
}

impl PartialEq for ModelFunction {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

fn check_params(kind: &ModelKind) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    match *kind {
        ModelKind::Euclidean {} | ModelKind::Hyperbolic {} => Ok(()),
        ModelKind::ExpPower { c, m } => {
            if !(c > 0.0 && c.is_finite()) {
                bad(format!("exppower needs c > 0, got {c}"))
            } else if m < 2 {
                bad(format!("exppower needs integer m >= 2, got {m}"))
            } else {
                Ok(())
            }
        }
        ModelKind::PowerLike { k } => {
            if k >= 1.0 && k.is_finite() {
                Ok(())
            } else {
                bad(format!("powerlike needs k >= 1, got {k}"))
            }
        }
        ModelKind::ExpGamma { c, gamma } => {
            if !(c > 0.0 && c.is_finite()) {
                bad(format!("expgamma needs c > 0, got {c}"))
            } else if !(gamma > 0.0 && gamma < 1.0) {
                bad(format!("expgamma needs gamma in (0, 1), got {gamma}"))
            } else {
                Ok(())
            }
        }
        ModelKind::Glued(_) => Ok(()),
    }
}

/// Log-spaced audit radii with `per_decade` points per decade on [lo, hi].
pub fn audit_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=count)
        .map(|i| {
            if i == count {
                hi
            } else {
                lo * 10f64.powf(decades * i as f64 / count as f64)
            }
        })
        .collect()
}

/// Default audit resolution.
pub const AUDIT_PER_DECADE: usize = 64;

impl ModelFunction {
    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, ModelKind::Euclidean {})
    }

    /// Maximal radius of trusted evaluation.
    pub fn valid_to(&self) -> f64 {
        match &self.repr {
            Repr::Closed => f64::INFINITY,
            Repr::Glued(g) => g.spec.horizon,
        }
    }

    pub fn point(&self, r: f64) -> ModelPoint {
        match &self.repr {
            Repr::Closed => closed_point(&self.kind, r),
            Repr::Glued(g) => g.point(r),
        }
    }

    /// (ψ, ψ', ψ''); may overflow to infinity for large r.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        if r <= 0.0 {
            return (0.0, 1.0, 0.0);
        }
        let pt = self.point(r);
        let psi = pt.log_psi.exp();
        (psi, psi * pt.dlog, psi * pt.curvature)
    }

    /// ln ψ^{n-1}(r), the log volume density.
    pub fn log_weight(&self, n: usize, r: f64) -> f64 {
        (n as f64 - 1.0) * self.point(r).log_psi
    }

    /// Check ψ'' ≥ 0, ψ' ≥ 1, ψ ≥ r on a log grid up to `horizon` together
    /// with the normalization at the pole.
    pub fn audit(&self, horizon: f64) -> Result<()> {
        let horizon = horizon.min(self.valid_to());
        let lo = 1e-4f64.min(horizon / 10.0);
        let tiny = 1e-7;
        let p0 = self.point(tiny);
        if (p0.log_psi - tiny.ln()).abs() > 1e-6 || (p0.log_dpsi()).abs() > 1e-6 {
            return Err(Error::ConvexityViolation(format!(
                "normalization psi(0)=0, psi'(0)=1 fails for {}",
                self.kind
            )));
        }
        for r in audit_grid(lo, horizon, AUDIT_PER_DECADE) {
            let pt = self.point(r);
            let eps = 1e-12 * (1.0 + pt.dlog * pt.dlog);
            if !(pt.curvature >= -eps) {
                return Err(Error::ConvexityViolation(format!(
                    "psi''/psi = {:e} < 0 at r = {r} for {}",
                    pt.curvature, self.kind
                )));
            }
            // glued models carry the integration error of (ln ψ, ψ'/ψ)
            let rel = if matches!(self.repr, Repr::Glued(_)) {
                1e-9
            } else {
                1e-12
            };
            let slack = rel * (1.0 + pt.log_psi.abs());
            if pt.log_psi < r.ln() - slack || pt.log_dpsi() < -slack {
                return Err(Error::ConvexityViolation(format!(
                    "psi >= r or psi' >= 1 fails at r = {r} for {}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    pub fn descriptor_json(&self) -> String {
        serde_json::to_string(&self.kind).expect("descriptor serializes")
    }
}

/// Build a model from its descriptor, validating parameters and convexity.
pub fn make_model(kind: &ModelKind) -> Result<ModelFunction> {
    check_params(kind)?;
    if let ModelKind::Glued(spec) = kind {
        return build_glued(spec.clone());
    }
    let model = ModelFunction {
        kind: kind.clone(),
        repr: Repr::Closed,
    };
    model.audit(1e3)?;
    Ok(model)
}

fn glue_control(width: f64) -> StepControl<2> {
    StepControl {
        rel_tol: 1e-12,
        abs_tol: [1e-13, 1e-13],
        h_init: (width / 16.0).min(1e-3),
        h_min: 1e-14,
        h_max: (width / 4.0).min(0.25),
        max_steps: 10_000_000,
    }
}

fn build_glued(spec: GluedSpec) -> Result<ModelFunction> {
    if spec.pieces.is_empty() {
        return Err(Error::InvalidParameter("glued model needs at least one piece".into()));
    }
    if spec.joins.len() + 1 != spec.pieces.len() {
        return Err(Error::InvalidParameter(format!(
            "{} pieces need {} join radii, got {}",
            spec.pieces.len(),
            spec.pieces.len() - 1,
            spec.joins.len()
        )));
    }
    if !(spec.width > 0.0 && spec.width.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "blend width must be > 0, got {}",
            spec.width
        )));
    }
    let mut prev = 0.0;
    for &j in &spec.joins {
        if !(j > prev) {
            return Err(Error::InvalidParameter(format!(
                "join radii must increase, got {j} after {prev}"
            )));
        }
        prev = j;
    }
    if !(spec.horizon > prev) {
        return Err(Error::InvalidParameter(format!(
            "horizon {} must lie beyond the last join {prev}",
            spec.horizon
        )));
    }
    let GluePiece::Model { model: first } = &spec.pieces[0] else {
        return Err(Error::InvalidParameter(
            "first glued piece must be a closed-form model".into(),
        ));
    };
    for (j, piece) in spec.pieces.iter().enumerate() {
        let offending = if j == 0 { 0.0 } else { spec.joins[j - 1] };
        match piece {
            GluePiece::Model { model } => {
                if matches!(model, ModelKind::Glued(_)) {
                    return Err(Error::InvalidParameter("glued pieces cannot nest".into()));
                }
                check_params(model)?;
                let m = ModelFunction {
                    kind: model.clone(),
                    repr: Repr::Closed,
                };
                m.audit(spec.horizon).map_err(|e| match e {
                    Error::ConvexityViolation(msg) => {
                        Error::ConvexityViolation(format!("piece {j} at join {offending}: {msg}"))
                    }
                    other => other,
                })?;
            }
            GluePiece::Exponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::ConvexityViolation(format!(
                        "piece {j} at join {offending}: exponential rate {rate} must be > 0"
                    )));
                }
            }
            GluePiece::Linear => {}
        }
    }
    let ctl = glue_control(spec.width);
    let mut segments = Vec::with_capacity(spec.joins.len());
    for (j, &start) in spec.joins.iter().enumerate() {
        let y0 = if j == 0 {
            let pt = closed_point(first, start);
            [pt.log_psi, pt.dlog]
        } else {
            segments_eval(&segments, j - 1, start)
        };
        let end = spec.joins.get(j + 1).copied().unwrap_or(spec.horizon);
        let sys = Blend {
            prev: &spec.pieces[j],
            next: &spec.pieces[j + 1],
            start,
            width: spec.width,
        };
        let mut traj = Trajectory::new(Knot {
            r: start,
            y: y0,
            dy: sys.rhs(start, &y0),
        });
        ode::integrate(
            &sys,
            &mut traj,
            end,
            EndMode::Overshoot,
            &ctl,
            |_, y| y[1] > 0.0,
            |_| Flow::Continue,
        )
        .map_err(|e| Error::QuadratureFailure(format!("glued segment {j}: {e}")))?;
        segments.push(traj);
    }
    let kind = ModelKind::Glued(spec.clone());
    Ok(ModelFunction {
        kind,
        repr: Repr::Glued(Arc::new(Glued { spec, segments })),
    })
}

fn segments_eval(segments: &[Trajectory<2>], j: usize, r: f64) -> [f64; 2] {
    segments[j].eval(r).0
}

/// Glue `pieces` (first one applies from the pole, its radius ignored) into
/// one convex model valid up to `horizon`.
pub fn glue_models(pieces: &[(GluePiece, f64)], width: f64, horizon: f64) -> Result<ModelFunction> {
    let spec = GluedSpec {
        pieces: pieces.iter().map(|(p, _)| p.clone()).collect(),
        joins: pieces.iter().skip(1).map(|(_, r)| *r).collect(),
        width,
        horizon,
    };
    build_glued(spec)
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Euclidean {} => write!(f, "euclidean"),
            ModelKind::Hyperbolic {} => write!(f, "hyperbolic"),
            ModelKind::ExpPower { c, m } => write!(f, "exppower:c={c},m={m}"),
            ModelKind::PowerLike { k } => write!(f, "powerlike:k={k}"),
            ModelKind::ExpGamma { c, gamma } => write!(f, "expgamma:c={c},gamma={gamma}"),
            ModelKind::Glued(s) => write!(f, "glued[{} pieces]", s.pieces.len()),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Parses `name` or `name:key=value,...`, or a JSON descriptor.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("model descriptor: {e}")));
        }
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = std::collections::BTreeMap::new();
        for kv in rest.split(',').filter(|t| !t.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got {kv:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number for {k}: {v:?}")))?;
            params.insert(k.trim().to_string(), v);
        }
        let get = |key: &str, default: Option<f64>| {
            params
                .get(key)
                .copied()
                .or(default)
                .ok_or_else(|| Error::InvalidParameter(format!("{name} needs parameter {key}")))
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "euclidean" => ModelKind::Euclidean {},
            "hyperbolic" => ModelKind::Hyperbolic {},
            "exppower" => {
                let m = get("m", None)?;
                if m.fract() != 0.0 || m < 0.0 {
                    return Err(Error::InvalidParameter(format!("exppower needs integer m, got {m}")));
                }
                ModelKind::ExpPower {
                    c: get("c", Some(1.0))?,
                    m: m as u32,
                }
            }
            "powerlike" => ModelKind::PowerLike { k: get("k", None)? },
            "expgamma" => ModelKind::ExpGamma {
                c: get("c", Some(1.0))?,
                gamma: get("gamma", None)?,
            },
            other => return Err(Error::InvalidParameter(format!("unknown model kind {other:?}"))),
        };
        check_params(&kind)?;
        Ok(kind)
    }
}
