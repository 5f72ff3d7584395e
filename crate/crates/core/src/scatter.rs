//! Input-output scattering of Gaussian photon pulses off a two-level
//! emitter in a two-sided waveguide, with perfect coupling.
//!
//! Frequencies are dimensionless, `ω = (k − Ω)·τ`, and times are in units
//! of `τ` (half the emitter lifetime). Conversion to physical units goes
//! through [`EmitterFrame`].
//!
//! The transmitted two-photon amplitude is the product of single-photon
//! transmissions plus an energy-conserving bound term,
//!
//! ```text
//! ψ(p₁,p₂) = t̄(p₁)t̄(p₂)φ(p₁)φ(p₂) + (i/2π)·G(p₁+p₂) / ((p₁+i)(p₂+i))
//! G(E)     = ∫ φ(k)φ(E−k) [1/(k+i) + 1/(E−k+i)] dk
//! ```
//!
//! `G` only depends on the total energy, so norms and overlaps are computed
//! in centre-of-energy coordinates `E = p₁+p₂`, `d = p₁−p₂`. The bound–bound
//! norm integrates over `d` in closed form (a Lorentzian convolution), since
//! that term is not confined by the pulse envelope.

use std::f64::consts::{LN_2, PI, SQRT_2};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::GaussLegendre;

pub const DEFAULT_LIFETIME_PS: f64 = 311.0;

/// Relative change under node doubling above which a result is rejected.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

/// Single-photon transmission below which the overlap is meaningless.
pub const DEGENERATE_TRANSMISSION: f64 = 1e-9;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatterError {
    #[error("invalid `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("quadrature did not converge for {quantity}: {coarse} vs {fine} after doubling nodes")]
    NonConvergence { quantity: &'static str, coarse: f64, fine: f64 },
    #[error("single-photon transmission {transmission:e} is too small; the pulse is fully reflected")]
    Degenerate { transmission: f64 },
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> ScatterError {
    ScatterError::InvalidParameter { name, value, reason }
}

/// Emitter-normalized unit system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmitterFrame {
    /// Half the emitter lifetime, in picoseconds.
    pub tau_ps: f64,
}

impl Default for EmitterFrame {
    fn default() -> Self {
        EmitterFrame { tau_ps: DEFAULT_LIFETIME_PS / 2.0 }
    }
}

impl EmitterFrame {
    pub fn new(tau_ps: f64) -> Result<Self, ScatterError> {
        if !(tau_ps > 0.0 && tau_ps.is_finite()) {
            return Err(invalid("tau", tau_ps, "must be positive"));
        }
        Ok(EmitterFrame { tau_ps })
    }

    pub fn from_lifetime_ps(lifetime_ps: f64) -> Result<Self, ScatterError> {
        Self::new(lifetime_ps / 2.0)
    }

    /// Ordinary frequency in GHz to dimensionless angular detuning.
    pub fn omega_from_ghz(&self, f_ghz: f64) -> f64 {
        2.0 * PI * f_ghz * self.tau_ps * 1e-3
    }

    pub fn ghz_from_omega(&self, omega: f64) -> f64 {
        omega / (2.0 * PI * self.tau_ps * 1e-3)
    }

    pub fn time_from_ps(&self, t_ps: f64) -> f64 {
        t_ps / self.tau_ps
    }

    pub fn ps_from_time(&self, t: f64) -> f64 {
        t * self.tau_ps
    }
}

/// Gaussian input pulse in the emitter frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Spectral amplitude width (the intensity standard deviation), units of 1/τ.
    pub sigma: f64,
    /// Centre detuning from the emitter, units of 1/τ.
    pub delta: f64,
}

impl PulseSpec {
    pub fn new(sigma: f64, delta: f64) -> Result<Self, ScatterError> {
        let p = PulseSpec { sigma, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ScatterError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", self.sigma, "must be positive and finite"));
        }
        if !self.delta.is_finite() {
            return Err(invalid("delta", self.delta, "must be finite"));
        }
        Ok(())
    }

    /// FWHM of the input temporal intensity, in units of τ.
    pub fn duration(&self) -> f64 {
        (2.0 * LN_2).sqrt() / self.sigma
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Half-width of the integration domain in multiples of σ.
    pub half_width: f64,
    /// Gauss–Legendre nodes per axis.
    pub nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { half_width: 8.0, nodes: 512 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), ScatterError> {
        if !(self.half_width >= 6.0 && self.half_width.is_finite()) {
            return Err(invalid("half_width", self.half_width, "must be at least 6"));
        }
        if self.nodes < 64 {
            return Err(invalid("nodes", self.nodes as f64, "must be at least 64"));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        QuadratureConfig { nodes: self.nodes * 2, ..*self }
    }
}

/// Simplified-model parameters together with the overlap they derive from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub phi_nl: f64,
    pub ell_nl: f64,
    pub eta: f64,
    pub r_int: f64,
    pub theta_int: f64,
}

impl NonlinearParams {
    /// Single-photon transmission probability `η(1−ℓ_NL)`.
    pub fn single_transmission(&self) -> f64 {
        self.eta * (1.0 - self.ell_nl)
    }

    /// Probability that a bunched pair is transmitted, `η²`.
    pub fn pair_transmission(&self) -> f64 {
        self.eta * self.eta
    }
}

/// `t̄(ω) = ½((ω−i)/(ω+i) + 1)`.
pub fn transmission_coefficient(omega: f64) -> C64 {
    0.5 * ((omega - I) / (omega + I) + 1.0)
}

/// Transmission of the coupled (chiral) channel alone, `(ω−i)/(ω+i)`.
pub fn chiral_transmission(omega: f64) -> C64 {
    (omega - I) / (omega + I)
}

/// L²-normalized Gaussian spectral amplitude.
pub fn gaussian_spectrum(omega: f64, pulse: &PulseSpec) -> f64 {
    let s2 = pulse.sigma * pulse.sigma;
    let x = omega - pulse.delta;
    (2.0 * PI * s2).powf(-0.25) * (-x * x / (4.0 * s2)).exp()
}

/// Evaluator for the scattering amplitudes at one quadrature resolution.
struct Scatterer {
    pulse: PulseSpec,
    half_width: f64,
    nodes: usize,
    /// Offsets `u = k − E/2` for the bound kernel.
    kernel_rule: GaussLegendre,
}

impl Scatterer {
    fn new(pulse: &PulseSpec, quad: &QuadratureConfig) -> Self {
        let reach = quad.half_width * pulse.sigma;
        Scatterer {
            pulse: *pulse,
            half_width: quad.half_width,
            nodes: quad.nodes,
            kernel_rule: GaussLegendre::new(quad.nodes, -reach, reach),
        }
    }

    fn reach(&self) -> f64 {
        self.half_width * self.pulse.sigma
    }

    fn phi(&self, w: f64) -> f64 {
        gaussian_spectrum(w, &self.pulse)
    }

    fn single(&self, w: f64) -> C64 {
        transmission_coefficient(w) * self.phi(w)
    }

    /// `G(E)`.
    fn kernel(&self, e: f64) -> C64 {
        let half = 0.5 * e;
        self.kernel_rule
            .iter()
            .map(|(u, w)| {
                let k1 = half + u;
                let k2 = half - u;
                let pair = self.phi(k1) * self.phi(k2);
                w * pair * (1.0 / (k1 + I) + 1.0 / (k2 + I))
            })
            .sum()
    }

    fn bound_from_kernel(g: C64, p1: f64, p2: f64) -> C64 {
        I / (2.0 * PI) * g / ((p1 + I) * (p2 + I))
    }

    fn product(&self, p1: f64, p2: f64) -> C64 {
        self.single(p1) * self.single(p2)
    }

    fn output(&self, p1: f64, p2: f64) -> C64 {
        // symmetric in (p1, p2) term by term
        let g = self.kernel(p1 + p2);
        self.product(p1, p2) + Self::bound_from_kernel(g, p1, p2)
    }

    fn energy_rule(&self) -> GaussLegendre {
        let c = 2.0 * self.pulse.delta;
        GaussLegendre::new(self.nodes, c - 2.0 * self.reach(), c + 2.0 * self.reach())
    }

    /// `P₁ = ∫|t̄φ|²`.
    fn single_transmission(&self) -> f64 {
        let d = self.pulse.delta;
        GaussLegendre::new(self.nodes, d - self.reach(), d + self.reach())
            .integrate(|w| self.single(w).norm_sqr())
    }

    fn norms(&self) -> Norms {
        let p1 = self.single_transmission();
        let e_rule = self.energy_rule();
        let d_rule = GaussLegendre::new(self.nodes, -2.0 * self.reach(), 2.0 * self.reach());
        let kernels: Vec<C64> = e_rule.nodes.iter().map(|&e| self.kernel(e)).collect();

        let mut cross = C64::new(0.0, 0.0);
        let mut bound = 0.0;
        for ((e, we), g) in e_rule.iter().zip(&kernels) {
            let mut inner = C64::new(0.0, 0.0);
            for (d, wd) in d_rule.iter() {
                let a = 0.5 * (e + d);
                let b = 0.5 * (e - d);
                inner += wd * self.product(a, b).conj() * Self::bound_from_kernel(*g, a, b);
            }
            cross += 0.5 * we * inner;
            // ∫ dd /(|p₁+i|²|p₂+i|²) = 4π/(E²+4)
            bound += we * g.norm_sqr() / (2.0 * PI * (e * e + 4.0));
        }
        Norms { single: p1, cross, bound }
    }

    fn params(&self) -> Result<NonlinearParams, ScatterError> {
        let n = self.norms();
        if n.single < DEGENERATE_TRANSMISSION {
            return Err(ScatterError::Degenerate { transmission: n.single });
        }
        let product_norm = n.single * n.single;
        let pair_norm = product_norm + 2.0 * n.cross.re + n.bound;
        let eta = pair_norm.sqrt();
        let overlap = (product_norm + n.cross).conj() / (eta * n.single);
        let r_int = overlap.norm();
        let theta_int = overlap.arg();
        let phi_nl = (r_int * theta_int.cos()).clamp(-1.0, 1.0).acos();
        Ok(NonlinearParams { phi_nl, ell_nl: 1.0 - n.single / eta, eta, r_int, theta_int })
    }
}

struct Norms {
    /// `∫|t̄φ|²`; the product state's norm is its square.
    single: f64,
    /// `⟨product|bound⟩`.
    cross: C64,
    /// `⟨bound|bound⟩`.
    bound: f64,
}

fn check_converged(quantity: &'static str, coarse: f64, fine: f64, scale: f64) -> Result<(), ScatterError> {
    if (coarse - fine).abs() > CONVERGENCE_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(ScatterError::NonConvergence { quantity, coarse, fine });
    }
    Ok(())
}

/// Pointwise transmitted two-photon amplitude `ψ(p₁, p₂)`.
pub fn two_photon_output(p1: f64, p2: f64, pulse: &PulseSpec, quad: &QuadratureConfig) -> Result<C64, ScatterError> {
    pulse.validate()?;
    quad.validate()?;
    if !(p1.is_finite() && p2.is_finite()) {
        return Err(invalid("p", if p1.is_finite() { p2 } else { p1 }, "must be finite"));
    }
    let coarse = Scatterer::new(pulse, quad).output(p1, p2);
    let fine = Scatterer::new(pulse, &quad.doubled()).output(p1, p2);
    // amplitudes far outside the pulse are compared against its peak scale
    let floor = 1e-12 * (2.0 * PI * pulse.sigma * pulse.sigma).powf(-0.5);
    if (coarse - fine).norm() > CONVERGENCE_TOLERANCE * fine.norm().max(floor) {
        return Err(ScatterError::NonConvergence { quantity: "two_photon_output", coarse: coarse.norm(), fine: fine.norm() });
    }
    Ok(fine)
}

/// Product term only, `t̄(p₁)t̄(p₂)φ(p₁)φ(p₂)`.
pub fn independent_output(p1: f64, p2: f64, pulse: &PulseSpec) -> C64 {
    transmission_coefficient(p1) * transmission_coefficient(p2) * gaussian_spectrum(p1, pulse) * gaussian_spectrum(p2, pulse)
}

/// Single-photon transmission probability `∫|t̄φ|²dω`.
pub fn single_photon_transmission(pulse: &PulseSpec, quad: &QuadratureConfig) -> Result<f64, ScatterError> {
    pulse.validate()?;
    quad.validate()?;
    Ok(Scatterer::new(pulse, quad).single_transmission())
}

/// Extracts the simplified-model parameters, certified by node doubling.
pub fn nonlinear_params(pulse: &PulseSpec, quad: &QuadratureConfig) -> Result<NonlinearParams, ScatterError> {
    pulse.validate()?;
    quad.validate()?;
    let coarse = Scatterer::new(pulse, quad).params()?;
    let fine = Scatterer::new(pulse, &quad.doubled()).params()?;
    check_converged("eta", coarse.eta, fine.eta, fine.eta.abs().max(1.0))?;
    check_converged("ell_nl", coarse.ell_nl, fine.ell_nl, fine.ell_nl.abs().max(1.0))?;
    check_converged("phi_nl", coarse.phi_nl, fine.phi_nl, fine.phi_nl.abs().max(1.0))?;
    Ok(fine)
}

/// Single-resolution variant used where doubling is handled by the caller.
pub fn nonlinear_params_unchecked(pulse: &PulseSpec, quad: &QuadratureConfig) -> Result<NonlinearParams, ScatterError> {
    pulse.validate()?;
    quad.validate()?;
    Scatterer::new(pulse, quad).params()
}

/// One row of a `(Δ, σ)` characterization sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub sigma: f64,
    pub params: NonlinearParams,
}

pub const SWEEP_COLUMNS: [&str; 7] = ["delta", "sigma", "phi_nl", "ell_nl", "eta", "r_int", "theta_int"];

impl SweepRow {
    pub fn record(&self) -> [f64; 7] {
        let p = &self.params;
        [self.delta, self.sigma, p.phi_nl, p.ell_nl, p.eta, p.r_int, p.theta_int]
    }
}

/// Evaluates every `(Δ, σ)` pair, σ-major. Order of the output matches the
/// input grid regardless of scheduling.
pub fn characterize(deltas: &[f64], sigmas: &[f64], quad: &QuadratureConfig) -> Result<Vec<SweepRow>, ScatterError> {
    let grid: Vec<(f64, f64)> = sigmas.iter().flat_map(|&s| deltas.iter().map(move |&d| (d, s))).collect();
    grid.par_iter()
        .map(|&(delta, sigma)| {
            let pulse = PulseSpec::new(sigma, delta)?;
            nonlinear_params(&pulse, quad).map(|params| SweepRow { delta, sigma, params })
        })
        .collect()
}

/// Uniform symmetric time grid `[−T, T]` in units of τ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub half_window: f64,
    pub points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { half_window: 8.0, points: 256 }
    }
}

impl TimeGrid {
    pub fn validate(&self) -> Result<(), ScatterError> {
        if !(self.half_window > 0.0 && self.half_window.is_finite()) {
            return Err(invalid("half_window", self.half_window, "must be positive"));
        }
        if self.points < 64 {
            return Err(invalid("grid", self.points as f64, "needs at least 64 points per axis"));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| -self.half_window + 2.0 * self.half_window * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Detected output configuration of the two-mode circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputPort {
    /// Both photons in the first mode, `|20⟩`.
    Bunched0,
    /// One photon per mode, `|11⟩`.
    Split,
    /// Both photons in the second mode, `|02⟩`.
    Bunched1,
}

/// Square matrix of joint temporal intensities on a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct JtiMatrix {
    pub times: Vec<f64>,
    /// `values[i][j]` at `(t₁, t₂) = (times[i], times[j])`.
    pub values: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl JtiMatrix {
    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Scales the matrix to unit peak; an all-zero matrix is left alone.
    pub fn normalized(mut self) -> Self {
        let m = self.max();
        if m > 0.0 {
            self.values.iter_mut().flatten().for_each(|v| *v /= m);
        }
        self
    }

    /// Row marginal `Σ_j JTI(t_i, t_j)`.
    pub fn marginal(&self) -> Vec<f64> {
        self.values.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Time-domain amplitudes on a grid: the product term factorizes as
/// `g(t₁)g(t₂)` and the bound term is `e^{−|t₁−t₂|}·B(min(t₁,t₂))`.
struct TemporalAmplitudes {
    single: Vec<C64>,
    bound: Vec<C64>,
}

impl TemporalAmplitudes {
    fn new(pulse: &PulseSpec, quad: &QuadratureConfig, times: &[f64]) -> Self {
        let s = Scatterer::new(pulse, quad);
        let d = pulse.delta;
        let w_rule = GaussLegendre::new(quad.nodes, d - s.reach(), d + s.reach());
        let spectrum: Vec<C64> = w_rule.nodes.iter().map(|&w| s.single(w)).collect();
        let e_rule = s.energy_rule();
        let kernel: Vec<C64> = e_rule.nodes.iter().map(|&e| s.kernel(e) / (e + 2.0 * I)).collect();

        let single = times
            .par_iter()
            .map(|&t| {
                let sum: C64 = w_rule
                    .iter()
                    .zip(&spectrum)
                    .map(|((w, wt), a)| wt * a * C64::from_polar(1.0, -w * t))
                    .sum();
                sum / (2.0 * PI).sqrt()
            })
            .collect();
        let bound = times
            .par_iter()
            .map(|&t| {
                let sum: C64 = e_rule
                    .iter()
                    .zip(&kernel)
                    .map(|((e, we), k)| we * k * C64::from_polar(1.0, -e * t))
                    .sum();
                sum / (2.0 * PI)
            })
            .collect();
        TemporalAmplitudes { single, bound }
    }

    fn product(&self, i: usize, j: usize) -> C64 {
        self.single[i] * self.single[j]
    }

    fn bound(&self, i: usize, j: usize, times: &[f64]) -> C64 {
        (-(times[i] - times[j]).abs()).exp() * self.bound[i.min(j)]
    }

    fn pair(&self, i: usize, j: usize, times: &[f64]) -> C64 {
        self.product(i, j) + self.bound(i, j, times)
    }
}

fn assemble<F>(times: &[f64], amp: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, usize) -> C64 + Sync,
{
    (0..times.len())
        .into_par_iter()
        .map(|i| (0..times.len()).map(|j| amp(i, j).norm_sqr()).collect())
        .collect()
}

fn grid_warnings(pulse: &PulseSpec, grid: &TimeGrid) -> Vec<String> {
    let mut warnings = Vec::new();
    if pulse.duration() > grid.half_window {
        warnings.push(format!(
            "pulse duration {:.3} exceeds half the time window ({:.3}); the JTI is truncated",
            pulse.duration(),
            grid.half_window
        ));
    }
    warnings
}

fn converged_matrix<F>(pulse: &PulseSpec, grid: &TimeGrid, quad: &QuadratureConfig, build: F) -> Result<JtiMatrix, ScatterError>
where
    F: Fn(&TemporalAmplitudes, &[f64]) -> Vec<Vec<f64>>,
{
    pulse.validate()?;
    quad.validate()?;
    grid.validate()?;
    let times = grid.times();
    let coarse = build(&TemporalAmplitudes::new(pulse, quad, &times), &times);
    let fine = build(&TemporalAmplitudes::new(pulse, &quad.doubled(), &times), &times);
    let peak = fine.iter().flatten().copied().fold(0.0, f64::max);
    let worst = coarse
        .iter()
        .flatten()
        .zip(fine.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst > CONVERGENCE_TOLERANCE * peak.max(f64::MIN_POSITIVE) {
        return Err(ScatterError::NonConvergence { quantity: "jti", coarse: peak + worst, fine: peak });
    }
    Ok(JtiMatrix { times, values: fine, warnings: grid_warnings(pulse, grid) })
}

/// `|ψ̃(t₁,t₂)|²` of the transmitted two-photon state.
pub fn jti(pulse: &PulseSpec, grid: &TimeGrid, quad: &QuadratureConfig) -> Result<JtiMatrix, ScatterError> {
    converged_matrix(pulse, grid, quad, |amps, times| assemble(times, |i, j| amps.pair(i, j, times)))
}

/// JTI of the independently scattered product state only.
pub fn independent_jti(pulse: &PulseSpec, grid: &TimeGrid, quad: &QuadratureConfig) -> Result<JtiMatrix, ScatterError> {
    converged_matrix(pulse, grid, quad, |amps, times| assemble(times, |i, j| amps.product(i, j)))
}

/// JTI at one output port of the full circuit at linear phase `phi`:
/// the pair-scattered term enters through the bunched paths with phase
/// `2φ`, the independently scattered term through the split path with
/// phase `φ`.
pub fn circuit_jti(
    pulse: &PulseSpec,
    phi: f64,
    port: OutputPort,
    grid: &TimeGrid,
    quad: &QuadratureConfig,
) -> Result<JtiMatrix, ScatterError> {
    if !phi.is_finite() {
        return Err(invalid("phi", phi, "must be finite"));
    }
    let bunched = C64::from_polar(1.0, 2.0 * phi) + 1.0;
    let split = C64::from_polar(2.0, phi);
    converged_matrix(pulse, grid, quad, |amps, times| {
        assemble(times, |i, j| match port {
            OutputPort::Bunched0 => 0.25 * (bunched * amps.pair(i, j, times) + split * amps.product(i, j)),
            OutputPort::Bunched1 => 0.25 * (bunched * amps.pair(i, j, times) - split * amps.product(i, j)),
            OutputPort::Split => (C64::from_polar(1.0, 2.0 * phi) - 1.0) / (2.0 * SQRT_2) * amps.pair(i, j, times),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn transmission_values() {
        assert!(transmission_coefficient(0.0).norm() < 1e-15);
        let t = transmission_coefficient(1.0);
        assert!((t - C64::new(0.5, -0.5)).norm() < 1e-15);
        assert!((t.norm_sqr() - 0.5).abs() < 1e-15);
        for w in [1e6, -1e6] {
            assert!((transmission_coefficient(w).norm() - 1.0).abs() < 1e-5);
        }
        assert!((chiral_transmission(0.37).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_spectrum_shape() {
        let pulse = PulseSpec::new(0.7, 1.3).unwrap();
        let peak = gaussian_spectrum(1.3, &pulse);
        assert!((peak - (2.0 * PI * 0.49f64).powf(-0.25)).abs() < 1e-15);
        let ratio = gaussian_spectrum(1.3 + 0.7, &pulse) / peak;
        assert!((ratio - (-0.25f64).exp()).abs() < 1e-15);
        let norm = GaussLegendre::new(512, 1.3 - 8.4, 1.3 + 8.4).integrate(|w| gaussian_spectrum(w, &pulse).powi(2));
        assert!((norm - 1.0).abs() < 1e-8);
    }

    #[test]
    fn validation() {
        assert!(PulseSpec::new(0.0, 0.0).is_err());
        assert!(PulseSpec::new(1.0, f64::NAN).is_err());
        let pulse = PulseSpec::new(1.0, 0.0).unwrap();
        let bad = QuadratureConfig { half_width: 5.0, nodes: 512 };
        assert!(matches!(nonlinear_params(&pulse, &bad), Err(ScatterError::InvalidParameter { name: "half_width", .. })));
        let bad = QuadratureConfig { half_width: 8.0, nodes: 32 };
        assert!(matches!(two_photon_output(0.0, 0.0, &pulse, &bad), Err(ScatterError::InvalidParameter { name: "nodes", .. })));
        assert!(EmitterFrame::new(-1.0).is_err());
    }

    #[test]
    fn output_is_symmetric() {
        let pulse = PulseSpec::new(1.0, 0.4).unwrap();
        for (a, b) in [(0.3, -1.2), (2.0, 0.1), (-0.5, -0.6)] {
            let x = two_photon_output(a, b, &pulse, &quad()).unwrap();
            let y = two_photon_output(b, a, &pulse, &quad()).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn far_detuned_output_is_the_product() {
        let pulse = PulseSpec::new(1.0, 1000.0).unwrap();
        for (a, b) in [(1000.0, 1000.0), (999.2, 1001.1), (1000.5, 998.7)] {
            let full = two_photon_output(a, b, &pulse, &quad()).unwrap();
            let prod = independent_output(a, b, &pulse);
            assert!((full - prod).norm() <= 1e-4 * prod.norm());
        }
    }

    #[test]
    fn far_detuned_limits() {
        let p = nonlinear_params(&PulseSpec::new(1.0, 1000.0).unwrap(), &quad()).unwrap();
        assert!(p.phi_nl < 1e-3);
        assert!(p.ell_nl.abs() < 1e-3);
        assert!((p.eta - 1.0).abs() < 1e-3);
    }

    #[test]
    fn resonant_pulse_is_strongly_nonlinear() {
        let on = nonlinear_params(&PulseSpec::new(1.0, 0.0).unwrap(), &quad()).unwrap();
        let off = nonlinear_params(&PulseSpec::new(1.0, 3.0).unwrap(), &quad()).unwrap();
        assert!(on.phi_nl > 0.3);
        assert!(on.ell_nl > off.ell_nl);
        assert!(on.eta < 1.0);
        assert!((on.phi_nl.cos() - on.r_int * on.theta_int.cos()).abs() < 1e-9);
    }

    #[test]
    fn frame_conversions() {
        let f = EmitterFrame::default();
        assert_eq!(f.tau_ps, 155.5);
        let w = f.omega_from_ghz(1.0);
        assert!((f.ghz_from_omega(w) - 1.0).abs() < 1e-12);
        assert!((f.time_from_ps(311.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_grid_rejected() {
        let pulse = PulseSpec::new(1.0, 0.0).unwrap();
        let grid = TimeGrid { half_window: 8.0, points: 32 };
        assert!(jti(&pulse, &grid, &quad()).is_err());
    }

    #[test]
    fn short_window_warns() {
        let pulse = PulseSpec::new(0.1, 0.0).unwrap();
        let grid = TimeGrid { half_window: 8.0, points: 64 };
        let m = jti(&pulse, &grid, &quad()).unwrap();
        assert_eq!(m.warnings.len(), 1);
    }
}
