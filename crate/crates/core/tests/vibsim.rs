use std::f64::consts::PI;

use nlcircuit::scatter::{characterize, QuadratureConfig, SweepRow};
use nlcircuit::vibsim::{
    evolve, evolve_with, interpolate_curve, max_phase, phase_to_detuning, trace, trace_with, water_spec,
    write_trace_csv, EvolveOptions, HardwareModel, InputMode, MoleculeSpec, VibError, SPEED_OF_LIGHT_CM,
};
use proptest::prelude::*;

fn curve() -> Vec<SweepRow> {
    let deltas: Vec<f64> = (0..=24).map(|k| 0.25 * k as f64).collect();
    characterize(&deltas, &[1.0], &QuadratureConfig::default()).unwrap()
}

#[test]
fn harmonic_trace_matches_independent_bosons() {
    let spec = water_spec();
    let split = 2.0 * PI * SPEED_OF_LIGHT_CM * (spec.nu10 - spec.nu01) * 1e-12;
    for k in 0..60 {
        let t = 0.01 * k as f64;
        let p = evolve(t, &spec, true).unwrap();
        let c2 = (split * t / 2.0).cos().powi(2);
        assert!((p.p_same_left - c2 * c2).abs() < 1e-12, "t={t}");
        assert!((p.p_same_right - (1.0 - c2).powi(2)).abs() < 1e-12, "t={t}");
        assert!((p.p_separate - 2.0 * c2 * (1.0 - c2)).abs() < 1e-12, "t={t}");
    }
}

#[test]
fn starts_localized_and_conserves_probability() {
    let points = trace(0.5, 51, &water_spec()).unwrap();
    assert_eq!(points[0].0.p_same_left, 1.0);
    assert_eq!(points[0].1.p_same_left, 1.0);
    for (a, h) in &points {
        for p in [a, h] {
            assert!((p.p_separate + p.p_same_left + p.p_same_right - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn anharmonicity_changes_the_dynamics() {
    let points = trace(0.5, 101, &water_spec()).unwrap();
    let gap = points.iter().map(|(a, h)| (a.p_same_left - h.p_same_left).abs()).fold(0.0, f64::max);
    assert!(gap > 0.05, "max divergence {gap}");
}

#[test]
fn harmonic_trace_is_periodic() {
    let spec = water_spec();
    let period = spec.harmonic_period_ps();
    assert!((period - 0.2771).abs() < 1e-4, "{period}");
    for k in 0..20 {
        let t = 0.013 * k as f64;
        let a = evolve(t, &spec, true).unwrap();
        let b = evolve(t + period, &spec, true).unwrap();
        assert!((a.p_same_left - b.p_same_left).abs() < 1e-9);
        assert!((a.p_separate - b.p_separate).abs() < 1e-9);
    }
}

#[test]
fn dropping_the_residual_phase_matters_only_anharmonically() {
    let spec = water_spec();
    let opts = EvolveOptions { drop_residual: true, ..Default::default() };
    let t = 0.21;
    let h0 = evolve(t, &spec, true).unwrap();
    let h1 = evolve_with(t, &spec, true, &opts).unwrap();
    assert_eq!(h0.p_same_left, h1.p_same_left);
    let a0 = evolve(t, &spec, false).unwrap();
    let a1 = evolve_with(t, &spec, false, &opts).unwrap();
    assert!((a0.p_same_left - a1.p_same_left).abs() > 1e-6);
}

#[test]
fn trace_csv_layout() {
    let points = trace(0.1, 3, &water_spec()).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &points, "anharmonic").unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema=1");
    assert_eq!(lines[1], "t_ps,variant,p_separate,p_same_left,p_same_right,phi_lin,phi_nl_0,phi_nl_1");
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines[2].starts_with("0.0,anharmonic,0.0,1.0,"));
    assert!(lines[3].starts_with("0.0,harmonic,"));
}

#[test]
fn molecule_spec_json_round_trip() {
    let spec = water_spec();
    let text = serde_json::to_string(&spec).unwrap();
    let back = MoleculeSpec::from_json(text.as_bytes()).unwrap();
    assert_eq!(back, spec);
    let broken = text.replace("3740.05", "-1.0");
    assert!(matches!(MoleculeSpec::from_json(broken.as_bytes()), Err(VibError::InvalidParameter { .. })));
}

#[test]
fn bad_trace_requests_are_rejected() {
    assert!(trace(0.5, 1, &water_spec()).is_err());
    assert!(trace(-0.5, 10, &water_spec()).is_err());
}

#[test]
fn detuning_lookup_closes() {
    let c = curve();
    for k in 0..=40 {
        let delta = 0.125 * k as f64;
        let (phi, _, _) = interpolate_curve(delta, &c).unwrap();
        let back = phase_to_detuning(phi, &c).unwrap();
        assert!((back - delta).abs() < 1e-9, "Δ={delta}: {back}");
    }
    let max = max_phase(&c).unwrap();
    assert!(matches!(phase_to_detuning(max + 0.1, &c), Err(VibError::OutOfRange { .. })));
    assert!(phase_to_detuning(-0.1, &c).is_err());
}

#[test]
fn hardware_emulation_stays_physical() {
    let opts = EvolveOptions { hardware: Some(HardwareModel { curve: curve() }), ..Default::default() };
    let points = trace_with(0.5, 26, &water_spec(), &opts).unwrap();
    assert!(points[0].0.p_same_left > 0.999);
    for (a, h) in &points {
        assert!((a.p_separate + a.p_same_left + a.p_same_right - 1.0).abs() < 1e-12);
        assert!(a.p_same_left >= 0.0 && a.p_same_right >= 0.0);
        assert!(!h.anharmonic);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mirrored_input_mirrors_the_output(t in 0.0..1.0f64, harmonic in any::<bool>()) {
        let spec = water_spec();
        let left = evolve(t, &spec, harmonic).unwrap();
        let right = evolve_with(t, &spec, harmonic, &EvolveOptions { input: InputMode::Right, ..Default::default() }).unwrap();
        prop_assert!((left.p_same_left - right.p_same_right).abs() < 1e-12);
        prop_assert!((left.p_separate - right.p_separate).abs() < 1e-12);
    }

    #[test]
    fn phases_are_wrapped(t in 0.0..10.0f64) {
        let p = evolve(t, &water_spec(), false).unwrap().phases;
        for x in [p.phi_lin, p.phi_nl_0, p.phi_nl_1, p.phi_11_residual] {
            prop_assert!(x > -PI - 1e-12 && x <= PI + 1e-12);
        }
    }
}
