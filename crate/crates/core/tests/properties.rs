use proptest::prelude::*;

use plap_core::geometry::theta_pointwise;
use plap_core::io::{numeric_table, read_numeric_table};
use plap_core::models::audit_grid;
use plap_core::sobolev::{euclidean_residual, residual_grid, RadialProfile};
use plap_core::*;

fn model(kind: ModelKind) -> ModelFunction {
    make_model(&kind).unwrap()
}

fn closed_kind() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::Euclidean {}),
        Just(ModelKind::Hyperbolic {}),
        (0.1..2.0f64, 2..4u32).prop_map(|(c, m)| ModelKind::ExpPower { c, m }),
        (1.0..3.0f64).prop_map(|k| ModelKind::PowerLike { k }),
        (0.2..2.0f64, 0.1..0.9f64).prop_map(|(c, gamma)| ModelKind::ExpGamma { c, gamma }),
    ]
}

fn glue_piece() -> impl Strategy<Value = GluePiece> {
    prop_oneof![
        Just(GluePiece::Linear),
        (0.5..6.0f64).prop_map(|rate| GluePiece::Exponential { rate }),
        Just(GluePiece::Model {
            model: ModelKind::PowerLike { k: 2.0 }
        }),
    ]
}

/// Critical or supercritical (n, p, q).
fn problem() -> impl Strategy<Value = (usize, f64, f64, f64)> {
    (3..6usize, 1.5..2.5f64, 0.0..1.0f64, 0.5..2.0f64).prop_map(|(n, p, t, alpha)| {
        let crit = (n as f64 * (p - 1.0) + p) / (n as f64 - p);
        let q = crit + 3.0 * t;
        (n, p, q, alpha)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cataloged_models_pass_audit(kind in closed_kind()) {
        let m = model(kind);
        prop_assert!(m.audit(10.0).is_ok());
        for r in audit_grid(1e-3, 10.0_f64.min(m.valid_to()), 8) {
            let (psi, dpsi, ddpsi) = m.eval(r);
            if psi.is_finite() && ddpsi.is_finite() {
                prop_assert!(psi >= r * (1.0 - 1e-12));
                prop_assert!(dpsi >= 1.0 - 1e-12);
                prop_assert!(ddpsi >= -f64::EPSILON * psi.max(1.0));
            }
        }
    }

    #[test]
    fn glued_models_pass_audit(pieces in prop::collection::vec(glue_piece(), 1..4), gaps in prop::collection::vec(1.0..4.0f64, 3)) {
        let mut spec = vec![(GluePiece::Model { model: ModelKind::Euclidean {} }, 0.0)];
        let mut r = 0.0;
        for (piece, gap) in pieces.into_iter().zip(gaps) {
            r += gap;
            spec.push((piece, r));
        }
        let m = glue_models(&spec, 0.5, r + 5.0).unwrap();
        let audit = m.audit(r + 5.0);
        prop_assert!(audit.is_ok(), "{audit:?}");
    }

    #[test]
    fn theta_is_at_most_r(kind in closed_kind(), n in 2..7usize) {
        let m = model(kind);
        for r in audit_grid(1e-2, 8.0, 6) {
            let th = theta_pointwise(&m, n, r, 1e-10).unwrap();
            prop_assert!(th <= r * (1.0 + 1e-9), "theta({r}) = {th}");
        }
    }

    #[test]
    fn euclidean_theta_is_r_over_n(n in 2..8usize, r in 1e-3..1e3f64) {
        let th = theta_pointwise(&model(ModelKind::Euclidean {}), n, r, 1e-12).unwrap();
        prop_assert!((th - r / n as f64).abs() <= 1e-10 * r);
    }

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(prop::array::uniform3(any::<f64>().prop_filter("finite", |x| x.is_finite())), 1..20)) {
        let text = numeric_table(&["a", "b", "c"], &rows).unwrap();
        let back = read_numeric_table(&text, &["a", "b", "c"]).unwrap();
        for (r, b) in rows.iter().zip(&back) {
            for (x, y) in r.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn aubin_talenti_residual_vanishes(n in 3..7usize, p in 1.3..2.8f64, a in 0.1..10.0f64, b in 0.01..100.0f64) {
        prop_assume!(p < n as f64 - 0.2);
        let at = AubinTalenti::new(n, p, a, b).unwrap();
        let rep = euclidean_residual(&at, &residual_grid());
        prop_assert!(rep.max_rel_residual < 1e-8, "{rep:?}");
    }
}

/// `factor` times another profile.
struct Scaled<'a>(&'a AubinTalenti, f64);

impl RadialProfile for Scaled<'_> {
    fn eval(&self, r: f64) -> (f64, f64) {
        let (u, du) = self.0.eval(r);
        (self.1 * u, self.1 * du)
    }

    fn length_scale(&self) -> f64 {
        self.0.length_scale()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quotient_is_amplitude_invariant(kappa in 1e-3..1e3f64, b in 0.05..2.0f64, hyperbolic in any::<bool>()) {
        let (m, trunc) = if hyperbolic {
            (model(ModelKind::Hyperbolic {}), Truncation::Fixed(5.0))
        } else {
            (model(ModelKind::Euclidean {}), Truncation::Auto { tail_tol: 1e-8 })
        };
        let at = AubinTalenti::new(3, 2.0, 1.0, b).unwrap();
        let q1 = sobolev_quotient(&at, &m, 3, 2.0, trunc).unwrap().quotient;
        let q2 = sobolev_quotient(&Scaled(&at, kappa), &m, 3, 2.0, trunc).unwrap().quotient;
        prop_assert!((q1 - q2).abs() <= 1e-10 * q1, "{q1} vs {q2}");
    }

    #[test]
    fn euclidean_quotient_is_b_invariant(b in 0.01..100.0f64) {
        let m = model(ModelKind::Euclidean {});
        let at = AubinTalenti::new(3, 2.0, 1.0, b).unwrap();
        let rep = sobolev_quotient(&at, &m, 3, 2.0, Truncation::Auto { tail_tol: 1e-8 }).unwrap();
        let (reference, err) = sobolev::euclidean_reference(3, 2.0).unwrap();
        prop_assert!((rep.quotient - reference).abs() <= 1e-6 * reference + rep.error + err);
    }

    #[test]
    fn flux_positivity_and_monotonicity((n, p, q, alpha) in problem(), hyperbolic in any::<bool>()) {
        let m = model(if hyperbolic { ModelKind::Hyperbolic {} } else { ModelKind::Euclidean {} });
        let prob = Problem::new(n, p, q, alpha).unwrap();
        let tol = 1e-9;
        let sol = integrate(&prob, &m, &SolverConfig::new(20.0).with_tol(tol)).unwrap();
        prop_assert!(sol.flux_residual() < 10.0 * tol, "flux residual {}", sol.flux_residual());
        for row in sol.rows().iter().skip(1) {
            prop_assert!(row[1] > 0.0 && row[2] < 0.0, "u = {}, u' = {} at r = {}", row[1], row[2], row[0]);
        }
        for w in sol.rows().windows(2) {
            prop_assert!(w[1][1] <= w[0][1]);
        }
        let r_end = sol.r_end();
        let (_, du_end, _) = sol.evaluate(r_end).unwrap();
        let (_, du_half, _) = sol.evaluate(r_end / 2.0).unwrap();
        prop_assert!(du_end.abs() < du_half.abs());
    }

    #[test]
    fn halving_tolerance_moves_u_little((n, p, q, alpha) in problem(), hyperbolic in any::<bool>()) {
        let m = model(if hyperbolic { ModelKind::Hyperbolic {} } else { ModelKind::Euclidean {} });
        let prob = Problem::new(n, p, q, alpha).unwrap();
        let tol = 1e-8;
        let coarse = integrate(&prob, &m, &SolverConfig::new(20.0).with_tol(tol)).unwrap();
        let fine = integrate(&prob, &m, &SolverConfig::new(20.0).with_tol(tol / 2.0)).unwrap();
        let r = coarse.r_end().min(fine.r_end());
        let a = coarse.state(r).unwrap().0;
        let b = fine.state(r).unwrap().0;
        prop_assert!((a - b).abs() < 5.0 * tol * a, "{a} vs {b} at r = {r}");
    }

    #[test]
    fn energy_functional_is_nonincreasing((n, p, q, alpha) in problem(), kind in prop_oneof![Just(ModelKind::Euclidean {}), Just(ModelKind::Hyperbolic {}), Just(ModelKind::PowerLike { k: 2.0 })]) {
        let m = model(kind);
        let prob = Problem::new(n, p, q, alpha).unwrap();
        let sol = integrate(&prob, &m, &SolverConfig::new(15.0)).unwrap();
        let profile = GeometryProfile::build(&m, n, p, 15.0, 1e-10).unwrap();
        let rep = functional_traces(&sol, &profile).unwrap();
        let f0 = rep.f[0];
        for w in rep.f.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * f0);
        }
        prop_assert!(rep.p_scaled.iter().zip(&rep.theta).all(|(&pv, &th)| pv <= 1e-8 * alpha.powf(q + 1.0) * th));
    }

    #[test]
    fn classification_is_stable_under_larger_horizon(idx in 0..4usize, horizon in 10.0..30.0f64, n in 3..5usize) {
        let kinds = [
            ModelKind::Euclidean {},
            ModelKind::Hyperbolic {},
            ModelKind::PowerLike { k: 2.0 },
            ModelKind::ExpPower { c: 1.0, m: 2 },
        ];
        let m = model(kinds[idx].clone());
        let small = classify_completeness(&GeometryProfile::build(&m, n, 2.0, horizon, 1e-10).unwrap()).unwrap();
        let large = classify_completeness(&GeometryProfile::build(&m, n, 2.0, 2.0 * horizon, 1e-10).unwrap()).unwrap();
        if small.verdict != Completeness::Inconclusive {
            prop_assert_eq!(small.verdict, large.verdict);
        }
    }
}

#[test]
fn ratio_tends_to_one_at_the_horizon() {
    // ψ^{n−1}/I over (n−1)ψ'/ψ is 1/((n−1)Θψ'/ψ)
    let cases = [
        (ModelKind::Hyperbolic {}, 20.0),
        (ModelKind::ExpPower { c: 1.0, m: 2 }, 10.0),
        (ModelKind::ExpPower { c: 1.0, m: 3 }, 10.0),
        (ModelKind::ExpGamma { c: 1.0, gamma: 0.5 }, 1e4),
    ];
    for (kind, r) in cases {
        let m = model(kind.clone());
        for n in 3..6 {
            let th = theta_pointwise(&m, n, r, 1e-10).unwrap();
            let ratio = 1.0 / ((n - 1) as f64 * th * m.point(r).dlog);
            assert!((ratio - 1.0).abs() < 0.02, "{kind:?} n={n}: ratio {ratio}");
        }
    }
}

#[test]
fn euclidean_is_psc_and_exppower_psi() {
    let e = model(ModelKind::Euclidean {});
    let v = classify_completeness(&GeometryProfile::build(&e, 3, 2.0, 40.0, 1e-10).unwrap()).unwrap();
    assert_eq!(v.verdict, Completeness::PSC);
    let x = model(ModelKind::ExpPower { c: 1.0, m: 3 });
    let v = classify_completeness(&GeometryProfile::build(&x, 3, 2.0, 10.0, 1e-10).unwrap()).unwrap();
    assert_eq!(v.verdict, Completeness::PSI);
}
