use std::f64::consts::PI;
use std::io::Cursor;

use nlcircuit::circuit::{
    calibrate, calibrate_phase, closed_form_statistics, excitation_fields, expected_histogram, fringe_contrast,
    fringe_visibility, full_model_statistics, model_statistics, normalize_counts, normalize_expected,
    synthesize_histogram, wrap_phase, CircuitError, Detectors, ModelParams, PeakHistogram, SynthesisSpec, TbiConfig,
    CENTER, PAIRS,
};
use proptest::prelude::*;

fn spec(phi: f64, phi_nl: f64, ell: f64, detectors: Detectors) -> SynthesisSpec {
    SynthesisSpec { model: ModelParams::new(phi, phi_nl, ell, 0.0), detectors }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detector_efficiencies_cancel(
        phi in -PI..PI, phi_nl in 0.0..PI, ell in 0.0..0.95f64,
        a1 in 0.05..=1.0f64, a2 in 0.05..=1.0f64, b1 in 0.05..=1.0f64, b2 in 0.05..=1.0f64,
    ) {
        let s = spec(phi, phi_nl, ell, Detectors { a1, a2, b1, b2 });
        let want = model_statistics(&s.model).unwrap().renormalized;
        let got = normalize_expected(&expected_histogram(&s).unwrap()).unwrap();
        prop_assert!((got.p20 - want.p20).abs() < 1e-12);
        prop_assert!((got.p11 - want.p11).abs() < 1e-12);
        prop_assert!((got.p02 - want.p02).abs() < 1e-12);
    }

    #[test]
    fn full_and_simplified_models_agree(phi in -PI..PI, r in 0.0..=1.0f64, theta in -PI..PI, eta in 0.0..=1.0f64, ell in 0.0..=1.0f64) {
        let full = full_model_statistics(phi, r, theta, eta, ell);
        let simple = closed_form_statistics(phi, (r * theta.cos()).acos(), ell, eta);
        prop_assert!((full.p20 - simple.p20).abs() < 1e-12);
        prop_assert!((full.p11 - simple.p11).abs() < 1e-12);
        prop_assert!((full.p02 - simple.p02).abs() < 1e-12);
    }

    #[test]
    fn wrapped_phase_is_equivalent(x in -100.0..100.0f64) {
        let w = wrap_phase(x);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        prop_assert!(((x - w) / (2.0 * PI) - ((x - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }
}

#[test]
fn synthesis_is_deterministic_and_exact_in_total() {
    let s = spec(0.4, 0.8, 0.2, Detectors { a1: 0.6, a2: 0.7, b1: 0.8, b2: 0.9 });
    let a = synthesize_histogram(&s, 100_000, 11).unwrap();
    let b = synthesize_histogram(&s, 100_000, 11).unwrap();
    let c = synthesize_histogram(&s, 100_000, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.total(), 100_000);
}

#[test]
fn normalized_counts_scatter_like_their_error_bars() {
    let s = spec(1.1, 0.9, 0.25, Detectors::default());
    let truth = model_statistics(&s.model).unwrap().renormalized;
    let mut z2 = 0.0;
    let trials = 200;
    for seed in 0..trials {
        let n = normalize_counts(&synthesize_histogram(&s, 100_000, seed).unwrap()).unwrap();
        z2 += ((n.p20 - truth.p20) / n.uncertainties[0]).powi(2);
    }
    let mean = z2 / trials as f64;
    assert!((0.7..1.3).contains(&mean), "mean squared pull {mean}");
}

#[test]
fn histogram_csv_round_trip() {
    let s = spec(0.3, 0.5, 0.1, Detectors::default());
    let h = synthesize_histogram(&s, 5000, 3).unwrap();
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# schema=1\npair,peak_row,peak_col,count\n"));
    assert_eq!(PeakHistogram::read_csv(Cursor::new(buf)).unwrap(), h);
}

#[test]
fn malformed_histograms_are_rejected() {
    let bad = "pair,peak_row,peak_col,count\nx-y,M,M,3\n";
    assert!(matches!(PeakHistogram::read_csv(Cursor::new(bad)), Err(CircuitError::Malformed(_))));
    let mut h = PeakHistogram::default();
    for g in h.counts.iter_mut() {
        g[CENTER.0][CENTER.1] = 10;
    }
    assert!(matches!(normalize_counts(&h), Err(CircuitError::NormalizationImpossible { .. })));
    assert_eq!(PAIRS.len(), 6);
}

#[test]
fn distinguishable_photons_match_closed_form_at_zero_angle() {
    for k in 0..12 {
        let phi = k as f64 * PI / 6.0;
        let mut p = ModelParams::new(phi, 0.7, 0.3, 1e-300);
        let layered = model_statistics(&p).unwrap().raw;
        p.theta_perp = 0.0;
        let closed = model_statistics(&p).unwrap().raw;
        assert!((layered.p20 - closed.p20).abs() < 1e-12);
        assert!((layered.p02 - closed.p02).abs() < 1e-12);
    }
}

#[test]
fn ideal_fringe_is_fully_visible() {
    let p20: Vec<f64> = (0..64)
        .map(|k| model_statistics(&ModelParams::new(2.0 * PI * k as f64 / 64.0, 0.0, 0.0, 0.0)).unwrap().renormalized.p20)
        .collect();
    assert!((fringe_visibility(&p20) - 1.0).abs() < 1e-12);
}

#[test]
fn contrast_follows_the_linear_phase() {
    let cfg = TbiConfig::default();
    let sweep: Vec<f64> = (0..8).map(|k| k as f64 * PI / 4.0).collect();
    let (curve, c) = fringe_contrast(&cfg, &sweep).unwrap();
    assert!((c - 1.0).abs() < 1e-15);
    // zeros at 0 and π/2, extrema at π/4 and 3π/4
    assert!(curve[0].abs() < 1e-12 && curve[2].abs() < 1e-12);
    assert!((curve[1].abs() - 1.0).abs() < 1e-12 && (curve[3].abs() - 1.0).abs() < 1e-12);

    let unbalanced = TbiConfig { eta_la1: 0.5, eta_lb1: 0.5, ..cfg };
    let (_, c) = fringe_contrast(&unbalanced, &sweep).unwrap();
    assert!((c - 0.8).abs() < 1e-12);
}

#[test]
fn excitation_pulses_are_balanced_at_quarter_wave() {
    for k in 0..16 {
        let cfg = TbiConfig { phi: k as f64 * PI / 8.0, ..TbiConfig::default() };
        let f = excitation_fields(&cfg).unwrap();
        assert!((f.early_intensity - f.late_intensity).abs() < 1e-12);
        assert!((f.early_intensity - 0.5).abs() < 1e-12);
        let want = cfg.theta + 2.0 * cfg.phi - PI / 2.0;
        assert!((wrap_phase(f.relative_phase - want)).abs() < 1e-12);
    }
}

#[test]
fn calibration_finds_the_intensity_minimum() {
    let sweep: Vec<f64> = (0..90).map(|k| k as f64 * 2.0 * PI / 90.0).collect();
    for theta in [0.0, 0.3, 1.2, -2.0] {
        let cfg = TbiConfig { theta, ..TbiConfig::default() };
        let phi0 = calibrate(&cfg, &sweep).unwrap();
        let at = cfg.m_peak_intensity_a1(phi0);
        let min = (0..2000).map(|k| cfg.m_peak_intensity_a1(k as f64 * PI / 2000.0)).fold(f64::MAX, f64::min);
        assert!(at <= min + 1e-9, "θ={theta}: {at} vs {min}");
        assert!((0.0..PI).contains(&phi0));
    }
    assert!(calibrate_phase(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn invalid_model_parameters_are_named() {
    match model_statistics(&ModelParams::new(0.0, 0.0, 1.5, 0.0)) {
        Err(CircuitError::InvalidParameter { name, .. }) => assert_eq!(name, "ell_nl"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn nonlinear_phase_washes_out_the_fringe() {
    let visibility = |phi_nl: f64| {
        let p20: Vec<f64> = (0..128)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / 128.0;
                model_statistics(&ModelParams::new(phi, phi_nl, 0.0, 0.0)).unwrap().renormalized.p20
            })
            .collect();
        fringe_visibility(&p20)
    };
    let v: Vec<f64> = (0..=10).map(|k| visibility(k as f64 * PI / 20.0)).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}
