//! Limit estimation from values at geometrically spaced radii.

use serde::{Deserialize, Serialize};

/// An extrapolated limit with an error bar. Never exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub value: f64,
    pub error: f64,
    /// Fitted algebraic order k in f(R) ≈ L + C R^{-k}; `None` when the
    /// differences are too small or change sign.
    pub order: Option<f64>,
}

/// Aitken Δ² on f(R), f(2R), f(4R), which is Richardson extrapolation for
/// algebraic convergence of unknown order. The error bar is the distance
/// between the extrapolated value and the last sample, floored by the
/// last increment when the fit is rejected.
pub fn richardson(f1: f64, f2: f64, f3: f64) -> Limit {
    let d1 = f2 - f1;
    let d2 = f3 - f2;
    let scale = f3.abs().max(f64::MIN_POSITIVE);
    if d2.abs() <= 1e-15 * scale {
        return Limit {
            value: f3,
            error: d2.abs().max(1e-15 * scale),
            order: None,
        };
    }
    let rho = d2 / d1;
    if !(rho > 0.0 && rho < 1.0) || !rho.is_finite() {
        // increments not shrinking geometrically: report the raw sample
        return Limit {
            value: f3,
            error: d2.abs().max(d1.abs()),
            order: None,
        };
    }
    let value = f3 + d2 * rho / (1.0 - rho);
    Limit {
        value,
        error: (value - f3).abs(),
        order: Some(-rho.log2()),
    }
}

/// Repeated Aitken over a whole sequence; returns the last triple's estimate
/// and uses the spread of the last two estimates as an extra error term.
pub fn richardson_sequence(values: &[f64]) -> Option<Limit> {
    if values.len() < 3 {
        return None;
    }
    let ests: Vec<Limit> = values.windows(3).map(|w| richardson(w[0], w[1], w[2])).collect();
    let last = *ests.last()?;
    if ests.len() >= 2 {
        let prev = ests[ests.len() - 2];
        let spread = (last.value - prev.value).abs();
        return Some(Limit {
            error: last.error.max(spread),
            ..last
        });
    }
    Some(last)
}

/// Least-squares slope and intercept of y on x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_algebraic_limit() {
        let f = |r: f64| 3.0 + 2.0 / (r * r);
        let l = richardson(f(10.0), f(20.0), f(40.0));
        assert!((l.value - 3.0).abs() < 1e-12);
        assert!((l.order.unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn non_geometric_increments_fall_back() {
        let l = richardson(1.0, 2.0, 4.0);
        assert_eq!(l.value, 4.0);
        assert!(l.order.is_none());
        assert_eq!(l.error, 2.0);
    }

    #[test]
    fn fit_line() {
        let (s, c) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14);
    }
}
