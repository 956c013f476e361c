use plap_core::oscillator::Thresholds;
use plap_core::*;

#[test]
fn four_stage_construction_invariants() {
    let c = construct(3, 2.0, 5.0, 1.0, 4, &OscillatorConfig::default()).unwrap();
    let cert = &c.certificate;
    for w in cert.stages.windows(2) {
        assert!(
            w[1].r_trigger >= w[0].r_trigger + 1.0,
            "{} then {}",
            w[0].r_trigger,
            w[1].r_trigger
        );
    }
    let t = Thresholds::new(3, 2.0, 5.0);
    let margin = 1e-8;
    assert!(cert.band_high - cert.band_low >= t.high - t.low - 2.0 * margin);
    let horizon = c.model.valid_to();
    c.model.audit(horizon).unwrap();
    // the certified glued spec rebuilds to the same model
    let rebuilt = make_model(&ModelKind::Glued(cert.model.clone())).unwrap();
    for s in &cert.stages {
        assert_eq!(rebuilt.point(s.r_trigger).log_psi, c.model.point(s.r_trigger).log_psi);
    }
    assert!(verify_certificate(cert, &c.solution, &c.profile).unwrap().passed);
}
