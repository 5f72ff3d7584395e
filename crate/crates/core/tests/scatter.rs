use std::f64::consts::PI;

use nlcircuit::scatter::{
    characterize, gaussian_spectrum, independent_jti, jti, nonlinear_params, single_photon_transmission,
    transmission_coefficient, two_photon_output, EmitterFrame, PulseSpec, QuadratureConfig, ScatterError, TimeGrid,
};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

/// Transmitted two-photon amplitude by direct composite-Simpson integration
/// of the bound-state kernel over a wide window.
fn brute_force_amplitude(p1: f64, p2: f64, pulse: &PulseSpec) -> C64 {
    let e = p1 + p2;
    let phi = |w: f64| gaussian_spectrum(w, pulse);
    let centre = e / 2.0;
    let half = 14.0 * pulse.sigma;
    let n = 40_000;
    let h = 2.0 * half / n as f64;
    let mut g = C64::new(0.0, 0.0);
    for k in 0..=n {
        let x = centre - half + k as f64 * h;
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        g += w * phi(x) * phi(e - x) * (1.0 / (x + I) + 1.0 / (e - x + I));
    }
    g *= h / 3.0;
    let t = |w: f64| 0.5 * ((w - I) / (w + I) + 1.0);
    t(p1) * t(p2) * phi(p1) * phi(p2) + I / (2.0 * PI) * g / ((p1 + I) * (p2 + I))
}

#[test]
fn amplitude_matches_direct_integration() {
    for (sigma, delta) in [(1.0, 0.0), (0.5, 0.3), (2.0, -1.0)] {
        let pulse = PulseSpec::new(sigma, delta).unwrap();
        for (p1, p2) in [(0.5, 0.2), (-0.3, 0.9), (delta, delta), (1.5, -1.2)] {
            let got = two_photon_output(p1, p2, &pulse, &quad()).unwrap();
            let want = brute_force_amplitude(p1, p2, &pulse);
            assert!((got - want).norm() < 1e-9, "σ={sigma} Δ={delta} ({p1},{p2}): {got} vs {want}");
        }
    }
}

#[test]
fn transmission_dips_to_zero_on_resonance() {
    assert!(transmission_coefficient(0.0).norm() < 1e-12);
    assert!((transmission_coefficient(1e6).norm() - 1.0).abs() < 1e-6);
}

#[test]
fn prototype_values_at_unit_width() {
    let cases = [
        (1.0, 0.0, 1.021104, 0.275712, Some(0.475392)),
        (1.0, 1.0, 0.586182, 0.211566, Some(0.607708)),
        (1.0, 3.0, 0.11115, 0.030266, None),
        (1.0, 5.0, 0.034841, 0.003188, None),
        (0.5, 0.0, 1.483231, 0.606617, None),
    ];
    for (sigma, delta, phi_nl, ell, eta) in cases {
        let p = nonlinear_params(&PulseSpec::new(sigma, delta).unwrap(), &quad()).unwrap();
        assert!((p.phi_nl - phi_nl).abs() < 2e-6, "σ={sigma} Δ={delta}: φ_NL {}", p.phi_nl);
        assert!((p.ell_nl - ell).abs() < 2e-6, "σ={sigma} Δ={delta}: ℓ {}", p.ell_nl);
        if let Some(eta) = eta {
            assert!((p.eta - eta).abs() < 2e-6, "σ={sigma} Δ={delta}: η {}", p.eta);
        }
    }
}

#[test]
fn single_photon_transmission_matches_product_of_norms() {
    let pulse = PulseSpec::new(1.0, 0.7).unwrap();
    let p1 = single_photon_transmission(&pulse, &quad()).unwrap();
    let p = nonlinear_params(&pulse, &quad()).unwrap();
    assert!((p.single_transmission() - p1).abs() < 1e-9);
}

#[test]
fn far_detuned_pulse_is_untouched() {
    let p = nonlinear_params(&PulseSpec::new(1.0, 1000.0).unwrap(), &quad()).unwrap();
    assert!(p.phi_nl.abs() < 1e-5 && p.ell_nl < 1e-9 && (p.eta - 1.0).abs() < 1e-5, "{p:?}");
}

#[test]
fn invalid_parameters_are_named() {
    match PulseSpec::new(0.0, 0.0) {
        Err(ScatterError::InvalidParameter { name, .. }) => assert_eq!(name, "sigma"),
        other => panic!("{other:?}"),
    }
    let bad = QuadratureConfig { half_width: 8.0, nodes: 8 };
    assert!(matches!(
        nonlinear_params(&PulseSpec::new(1.0, 0.0).unwrap(), &bad),
        Err(ScatterError::InvalidParameter { name: "nodes", .. })
    ));
}

#[test]
fn frame_conversions_round_trip() {
    let f = EmitterFrame::default();
    assert_eq!(f.tau_ps, 155.5);
    assert!((f.ghz_from_omega(f.omega_from_ghz(3.2)) - 3.2).abs() < 1e-12);
    assert!((f.ps_from_time(f.time_from_ps(42.0)) - 42.0).abs() < 1e-12);
}

#[test]
fn sweep_is_sigma_major_and_ordered() {
    let rows = characterize(&[0.0, 1.0], &[0.5, 1.0], &quad()).unwrap();
    let keys: Vec<(f64, f64)> = rows.iter().map(|r| (r.sigma, r.delta)).collect();
    assert_eq!(keys, vec![(0.5, 0.0), (0.5, 1.0), (1.0, 0.0), (1.0, 1.0)]);
}

fn small_grid() -> TimeGrid {
    TimeGrid { half_window: 8.0, points: 96 }
}

#[test]
fn jti_is_symmetric_and_carries_the_pair_norm() {
    let pulse = PulseSpec::new(1.0, 0.5).unwrap();
    let grid = small_grid();
    let m = jti(&pulse, &grid, &quad()).unwrap();
    let n = m.times.len();
    for i in 0..n {
        for j in 0..n {
            assert!((m.values[i][j] - m.values[j][i]).abs() <= 1e-12 * m.max());
            assert!(m.values[i][j] >= 0.0);
        }
    }
    let dt = m.times[1] - m.times[0];
    let total: f64 = m.values.iter().flatten().sum::<f64>() * dt * dt;
    let eta = nonlinear_params(&pulse, &quad()).unwrap().eta;
    assert!((total - eta * eta).abs() < 1e-2 * eta * eta, "{total} vs {}", eta * eta);
}

#[test]
fn independent_jti_factorizes() {
    let pulse = PulseSpec::new(1.0, 0.0).unwrap();
    let m = independent_jti(&pulse, &small_grid(), &quad()).unwrap();
    let diag: Vec<f64> = (0..m.times.len()).map(|i| m.values[i][i]).collect();
    for i in 0..m.times.len() {
        for j in 0..m.times.len() {
            let outer = (diag[i] * diag[j]).sqrt();
            assert!((m.values[i][j] - outer).abs() < 1e-12 * m.max().max(1e-300));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transmission_is_bounded(w in -1e3..1e3f64) {
        prop_assert!(transmission_coefficient(w).norm() <= 1.0 + 1e-15);
    }

    #[test]
    fn parameters_are_even_in_detuning_and_physical(sigma in 0.4..2.0f64, delta in 0.0..6.0f64) {
        let p = nonlinear_params(&PulseSpec::new(sigma, delta).unwrap(), &quad()).unwrap();
        let m = nonlinear_params(&PulseSpec::new(sigma, -delta).unwrap(), &quad()).unwrap();
        prop_assert!((p.phi_nl - m.phi_nl).abs() < 1e-9);
        prop_assert!((p.ell_nl - m.ell_nl).abs() < 1e-9);
        prop_assert!((p.eta - m.eta).abs() < 1e-9);
        prop_assert!((p.theta_int + m.theta_int).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&p.ell_nl));
        prop_assert!(p.eta > 0.0 && p.eta <= 1.0);
        prop_assert!(p.r_int >= 0.0 && p.r_int <= 1.0 + 1e-12);
        prop_assert!(p.phi_nl >= 0.0 && p.phi_nl <= PI);
        prop_assert!(p.pair_transmission() >= p.single_transmission().powi(2));
    }
}
