//! Dormand-Prince 5(4) integrator with PI step control and Hermite dense output.
//!
//! The integrator never inspects the requested end point when choosing a step,
//! except to clip the final step under [`EndMode::Exact`]; two runs over the
//! same system therefore agree knot-for-knot on their common prefix.

use std::fmt;

/// A first-order system y' = f(r, y) of fixed dimension.
pub trait System<const N: usize> {
    fn rhs(&self, r: f64, y: &[f64; N]) -> [f64; N];
}

/// Accepted integration point with the state derivative evaluated there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot<const N: usize> {
    pub r: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

/// Piecewise cubic Hermite reconstruction through accepted knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub knots: Vec<Knot<N>>,
}

impl<const N: usize> Trajectory<N> {
    pub fn new(first: Knot<N>) -> Self {
        Self { knots: vec![first] }
    }

    pub fn start(&self) -> f64 {
        self.knots[0].r
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].r
    }

    pub fn last(&self) -> &Knot<N> {
        &self.knots[self.knots.len() - 1]
    }

    /// Index `i` with `knots[i].r <= r <= knots[i+1].r` (clamped to the range).
    pub fn segment(&self, r: f64) -> usize {
        let n = self.knots.len();
        if n < 2 || r <= self.knots[0].r {
            return 0;
        }
        if r >= self.knots[n - 1].r {
            return n - 2;
        }
        match self.knots.binary_search_by(|k| k.r.total_cmp(&r)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        }
    }

    /// Hermite value and derivative on segment `i`.
    pub fn eval_on(&self, i: usize, r: f64) -> ([f64; N], [f64; N]) {
        if self.knots.len() == 1 {
            return (self.knots[0].y, self.knots[0].dy);
        }
        let a = &self.knots[i];
        let b = &self.knots[i + 1];
        let h = b.r - a.r;
        let t = (r - a.r) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let mut y = [0.0; N];
        let mut dy = [0.0; N];
        for k in 0..N {
            y[k] = h00 * a.y[k] + h10 * h * a.dy[k] + h01 * b.y[k] + h11 * h * b.dy[k];
            dy[k] = d00 * a.y[k] + d10 * a.dy[k] + d01 * b.y[k] + d11 * b.dy[k];
        }
        (y, dy)
    }

    pub fn eval(&self, r: f64) -> ([f64; N], [f64; N]) {
        let i = self.segment(r);
        if let Some(k) = self.knots.get(i).filter(|k| k.r == r) {
            return (k.y, k.dy);
        }
        if let Some(k) = self.knots.get(i + 1).filter(|k| k.r == r) {
            return (k.y, k.dy);
        }
        self.eval_on(i, r)
    }

    /// Drop every knot beyond `r`, inserting a knot at `r` from the
    /// reconstruction with its derivative recomputed from `sys`.
    pub fn truncate_at<S: System<N>>(&mut self, sys: &S, r: f64) {
        if r >= self.end() {
            return;
        }
        let i = self.segment(r);
        if self.knots[i].r == r {
            self.knots.truncate(i + 1);
            return;
        }
        let (y, _) = self.eval_on(i, r);
        self.knots.truncate(i + 1);
        let dy = sys.rhs(r, &y);
        self.knots.push(Knot { r, y, dy });
    }
}

/// Whether the final step must land exactly on the end radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndMode {
    Exact,
    /// Stop at the first accepted knot at or past the end radius.
    Overshoot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<const N: usize> {
    pub rel_tol: f64,
    pub abs_tol: [f64; N],
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

/// Observer verdict after each accepted knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedEnd,
    Stopped,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError {
    StepCollapse { r: f64, h: f64 },
    TooManySteps { r: f64 },
}

impl fmt::Display for OdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeError::StepCollapse { r, h } => write!(f, "step size {h:e} collapsed at r = {r}"),
            OdeError::TooManySteps { r } => write!(f, "step budget exhausted at r = {r}"),
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrate from the last knot of `traj` towards `r_end`, appending knots.
///
/// `admissible` rejects states that are outside the domain of the system
/// (the step is retried with a smaller size). `observer` sees every
/// accepted knot and may stop the run.
pub fn integrate<const N: usize, S, A, O>(
    sys: &S,
    traj: &mut Trajectory<N>,
    r_end: f64,
    mode: EndMode,
    ctl: &StepControl<N>,
    admissible: A,
    mut observer: O,
) -> Result<Termination, OdeError>
where
    S: System<N>,
    A: Fn(f64, &[f64; N]) -> bool,
    O: FnMut(&Knot<N>) -> Flow,
{
    let mut r = traj.end();
    let mut y = traj.last().y;
    let mut k1 = traj.last().dy;
    let mut h = ctl.h_init.min(ctl.h_max);
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0usize;
    let mut rejected_last = false;
    while r < r_end {
        if steps >= ctl.max_steps {
            return Err(OdeError::TooManySteps { r });
        }
        let mut step = h;
        let clipped = mode == EndMode::Exact && r + step >= r_end;
        if clipped {
            step = r_end - r;
        }
        let k2 = sys.rhs(r + C2 * step, &combo(&y, step, &[(A21, &k1)]));
        let k3 = sys.rhs(r + C3 * step, &combo(&y, step, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(r + C4 * step, &combo(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = sys.rhs(
            r + C5 * step,
            &combo(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = sys.rhs(
            r + step,
            &combo(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = combo(&y, step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let r_new = if clipped { r_end } else { r + step };
        let k7 = sys.rhs(r_new, &y_new);
        let ok_state = finite(&y_new) && finite(&k7) && admissible(r_new, &y_new);
        let mut err = f64::INFINITY;
        if ok_state {
            let mut acc = 0.0;
            for i in 0..N {
                let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = ctl.abs_tol[i] + ctl.rel_tol * y[i].abs().max(y_new[i].abs());
                acc += (e / sc) * (e / sc);
            }
            err = (acc / N as f64).sqrt();
            if !err.is_finite() {
                err = f64::INFINITY;
            }
        }
        if err <= 1.0 {
            steps += 1;
            r = r_new;
            y = y_new;
            k1 = k7;
            let knot = Knot { r, y, dy: k7 };
            traj.knots.push(knot);
            // PI controller
            let e = err.max(1e-10);
            let mut fac = 0.9 * e.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            if !clipped {
                h = (step * fac).clamp(ctl.h_min, ctl.h_max);
            }
            err_prev = e;
            rejected_last = false;
            if observer(&knot) == Flow::Stop {
                return Ok(Termination::Stopped);
            }
            if mode == EndMode::Overshoot && r >= r_end {
                break;
            }
        } else {
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h = step * fac;
            rejected_last = true;
            if h < ctl.h_min {
                return Err(OdeError::StepCollapse { r, h });
            }
        }
    }
    Ok(Termination::ReachedEnd)
}
