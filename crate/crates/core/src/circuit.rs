//! The double-pass time-bin interferometer and the statistics it records.
//!
//! Covers the excitation-path field model, the detection-path fringe
//! contrast and its calibration, closed-form two-photon output statistics,
//! the side-peak normalization of coincidence histograms, and Monte Carlo
//! synthesis of such histograms.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, BufRead, Write};

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::states::{balanced_circuit, OutputStats, StateError, TwoPhotonState};
use crate::table;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("invalid `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("side-peak counts for the {kind} coincidences are zero; efficiencies cannot be normalized out")]
    NormalizationImpossible { kind: &'static str },
    #[error("all center-peak counts are zero; no probability can be assigned")]
    EmptyCenters,
    #[error(transparent)]
    State(#[from] StateError),
    #[error("malformed histogram: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> CircuitError {
    CircuitError::InvalidParameter { name, value, reason }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), CircuitError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(invalid(name, value, "must lie in [0, 1]"))
    }
}

fn check_finite(name: &'static str, value: f64) -> Result<(), CircuitError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, value, "must be finite"))
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Settings of the time-bin interferometer. Delays are in ns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TbiConfig {
    pub phi: f64,
    pub theta_qwp: f64,
    pub t_short: f64,
    pub t_long: f64,
    pub tau_short: f64,
    pub tau_long: f64,
    /// Long/short arm phase seen by the excitation path.
    pub theta: f64,
    /// Long/short arm phase seen by the detection path.
    pub theta_prime: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub eta_sa1: f64,
    pub eta_sb1: f64,
    pub eta_la1: f64,
    pub eta_lb1: f64,
}

impl Default for TbiConfig {
    fn default() -> Self {
        TbiConfig {
            phi: 0.0,
            theta_qwp: PI / 4.0,
            t_short: 1.0,
            t_long: 1.0,
            tau_short: 1.0,
            tau_long: 4.0,
            theta: 0.0,
            theta_prime: 0.0,
            theta1: FRAC_PI_2,
            theta2: FRAC_PI_2,
            eta_sa1: 1.0,
            eta_sb1: 1.0,
            eta_la1: 1.0,
            eta_lb1: 1.0,
        }
    }
}

impl TbiConfig {
    pub fn validate(&self) -> Result<(), CircuitError> {
        for (name, v) in [
            ("phi", self.phi),
            ("theta_qwp", self.theta_qwp),
            ("theta", self.theta),
            ("theta_prime", self.theta_prime),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
        ] {
            check_finite(name, v)?;
        }
        for (name, v) in [
            ("t_short", self.t_short),
            ("t_long", self.t_long),
            ("eta_sa1", self.eta_sa1),
            ("eta_sb1", self.eta_sb1),
            ("eta_la1", self.eta_la1),
            ("eta_lb1", self.eta_lb1),
        ] {
            check_probability(name, v)?;
        }
        if !(self.tau_short > 0.0 && self.tau_short.is_finite()) {
            return Err(invalid("tau_short", self.tau_short, "must be positive"));
        }
        if !(self.tau_long > self.tau_short && self.tau_long.is_finite()) {
            return Err(invalid("tau_long", self.tau_long, "must exceed tau_short"));
        }
        Ok(())
    }

    /// Efficiency-imbalance factor of the detection-path fringe.
    pub fn contrast_amplitude(&self) -> f64 {
        let (sa, sb, la, lb) = (self.eta_sa1, self.eta_sb1, self.eta_la1, self.eta_lb1);
        let den = sa * sa + sb * sb + la * la + lb * lb;
        if den == 0.0 {
            0.0
        } else {
            2.0 * (sa * la + sb * lb) / den
        }
    }

    /// Middle-bin intensity at detector a1 at linear phase `phi`.
    pub fn m_peak_intensity_a1(&self, phi: f64) -> f64 {
        let (sa, la) = (self.eta_sa1, self.eta_la1);
        sa * sa + la * la - 2.0 * sa * la * (self.theta2 + self.theta_prime - self.theta - 2.0 * phi).sin()
    }
}

/// Early and late excitation pulses at the output of the excitation path,
/// evaluated at the envelope peak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcitationFields {
    pub early: C64,
    pub late: C64,
    pub early_intensity: f64,
    pub late_intensity: f64,
    /// `arg(E_early) − arg(E_late)`, continuous in `φ`.
    pub relative_phase: f64,
}

pub fn excitation_fields(config: &TbiConfig) -> Result<ExcitationFields, CircuitError> {
    config.validate()?;
    let phi = config.phi;
    let q = 2.0 * config.theta_qwp;
    let pre = C64::new(0.5, 0.5);
    let early = pre * config.t_short.sqrt() * C64::new(phi.sin(), (phi - q).sin());
    let late = C64::from_polar(1.0, -config.theta) * pre * config.t_long.sqrt() * C64::new(phi.cos(), -(phi - q).cos());
    let branch = config.theta + 2.0 * phi - FRAC_PI_2;
    let relative_phase = if early.norm() > 0.0 && late.norm() > 0.0 {
        branch + wrap_phase(early.arg() - late.arg() - branch)
    } else {
        branch
    };
    Ok(ExcitationFields {
        early,
        late,
        early_intensity: early.norm_sqr(),
        late_intensity: late.norm_sqr(),
        relative_phase,
    })
}

/// Middle-bin detector contrast `(I_a1 − I_b1)/(I_a1 + I_b1)` over a phase
/// sweep, together with its amplitude factor.
pub fn fringe_contrast(config: &TbiConfig, phi_sweep: &[f64]) -> Result<(Vec<f64>, f64), CircuitError> {
    config.validate()?;
    let c = config.contrast_amplitude();
    let curve = phi_sweep
        .iter()
        .map(|&phi| -c * (2.0 * phi + config.theta - config.theta_prime - FRAC_PI_2).cos())
        .collect();
    Ok((curve, c))
}

/// Least-squares `y ≈ b + p·cos 2φ + q·sin 2φ`. `None` when the phases do
/// not determine the three coefficients.
pub fn harmonic_fit(phis: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    if phis.len() != ys.len() || phis.len() < 3 {
        return None;
    }
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&phi, &y) in phis.iter().zip(ys) {
        let row = [1.0, (2.0 * phi).cos(), (2.0 * phi).sin()];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let x = solve3(ata, aty)?;
    Some((x[0], x[1], x[2]))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Zero of the linear phase: the `φ₀ ∈ [0, π)` that minimizes the
/// middle-bin counts at a1, located from a sweep of measured intensities.
pub fn calibrate_phase(phis: &[f64], a1_intensity: &[f64]) -> Result<f64, CircuitError> {
    let (_, p, q) = harmonic_fit(phis, a1_intensity)
        .ok_or_else(|| CircuitError::Malformed("calibration sweep needs at least three distinct phases".into()))?;
    if p.hypot(q) == 0.0 {
        return Err(CircuitError::Malformed("calibration sweep shows no fringe".into()));
    }
    Ok(((q.atan2(p) + PI) / 2.0).rem_euclid(PI))
}

/// Runs the calibration on the modelled a1 middle-bin intensity and
/// returns `φ₀`.
pub fn calibrate(config: &TbiConfig, phi_sweep: &[f64]) -> Result<f64, CircuitError> {
    config.validate()?;
    let intensity: Vec<f64> = phi_sweep.iter().map(|&phi| config.m_peak_intensity_a1(phi)).collect();
    calibrate_phase(phi_sweep, &intensity)
}

/// Parameters of the simplified circuit model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub phi: f64,
    pub phi_nl: f64,
    pub ell_nl: f64,
    #[serde(default = "unit")]
    pub eta: f64,
    #[serde(default)]
    pub theta_perp: f64,
}

fn unit() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(phi: f64, phi_nl: f64, ell_nl: f64, theta_perp: f64) -> Self {
        ModelParams { phi, phi_nl, ell_nl, eta: 1.0, theta_perp }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check_finite("phi", self.phi)?;
        check_finite("phi_nl", self.phi_nl)?;
        check_finite("theta_perp", self.theta_perp)?;
        check_probability("ell_nl", self.ell_nl)?;
        check_probability("eta", self.eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStatistics {
    pub raw: OutputStats,
    pub renormalized: OutputStats,
}

/// Closed-form raw statistics of the balanced circuit without
/// distinguishability.
pub fn closed_form_statistics(phi: f64, phi_nl: f64, ell_nl: f64, eta: f64) -> OutputStats {
    let e2 = eta * eta;
    let keep = 1.0 - ell_nl;
    let common = 2.0 * (1.0 + (2.0 * phi).cos()) + 4.0 * keep * keep;
    let cross = 8.0 * keep * phi.cos() * phi_nl.cos();
    OutputStats::new(
        e2 / 16.0 * (common + cross),
        e2 / 4.0 * (1.0 - (2.0 * phi).cos()),
        e2 / 16.0 * (common - cross),
    )
}

/// Raw statistics from the scattering overlap itself: `r_int·e^{iθ_int}`
/// weights the interference between the pair-scattered and independently
/// scattered paths.
pub fn full_model_statistics(phi: f64, r_int: f64, theta_int: f64, eta: f64, ell_nl: f64) -> OutputStats {
    let e2 = eta * eta;
    let keep = 1.0 - ell_nl;
    let bunched = C64::from_polar(1.0, 2.0 * phi) + 1.0;
    let cross = (bunched * C64::from_polar(1.0, -phi) * C64::from_polar(r_int, -theta_int)).re;
    let common = bunched.norm_sqr() + 4.0 * keep * keep;
    OutputStats::new(
        e2 / 16.0 * (common + 4.0 * keep * cross),
        e2 / 8.0 * (C64::from_polar(1.0, 2.0 * phi) - 1.0).norm_sqr(),
        e2 / 16.0 * (common - 4.0 * keep * cross),
    )
}

/// Output statistics of the balanced circuit. Without distinguishability
/// this is the closed form; otherwise the layered state evolution.
pub fn model_statistics(params: &ModelParams) -> Result<ModelStatistics, CircuitError> {
    params.validate()?;
    let raw = if params.theta_perp == 0.0 {
        closed_form_statistics(params.phi, params.phi_nl, params.ell_nl, params.eta)
    } else {
        let layers = balanced_circuit(params.phi, params.phi_nl, params.ell_nl, params.eta, params.theta_perp);
        TwoPhotonState::new_input().apply_all(&layers)?.detection_probabilities().raw
    };
    Ok(ModelStatistics { raw, renormalized: raw.renormalized()? })
}

/// `(max − min)/(max + min)` of a sampled fringe.
pub fn fringe_visibility(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max + min > 0.0) {
        return 0.0;
    }
    (max - min) / (max + min)
}

/// Detector labels; `a` detectors watch output mode 0, `b` mode 1.
pub const DETECTORS: [&str; 4] = ["a1", "a2", "b1", "b2"];

/// Detector pairs in histogram order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

pub const PEAKS: [&str; 3] = ["E", "M", "L"];

/// Which output configuration a detector pair witnesses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairKind {
    Bunched0,
    Split,
    Bunched1,
}

pub fn pair_kind(pair: usize) -> PairKind {
    match pair {
        0 => PairKind::Bunched0,
        5 => PairKind::Bunched1,
        _ => PairKind::Split,
    }
}

pub fn pair_label(pair: usize) -> String {
    let (a, b) = PAIRS[pair];
    format!("{}-{}", DETECTORS[a], DETECTORS[b])
}

fn pair_from_label(label: &str) -> Option<usize> {
    (0..PAIRS.len()).find(|&p| pair_label(p) == label)
}

/// Peak index pair `(M, M)` where both photons took paths of equal length.
pub const CENTER: (usize, usize) = (1, 1);
const SIDES: [(usize, usize); 2] = [(0, 2), (2, 0)];

/// Coincidence counts: for each detector pair a 3×3 grid indexed by the
/// (E, M, L) peak of the first and second detector.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakHistogram {
    pub counts: [[[u64; 3]; 3]; 6],
}

impl PeakHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().flatten().sum()
    }

    pub fn expected(&self) -> [[[f64; 3]; 3]; 6] {
        self.counts.map(|g| g.map(|r| r.map(|c| c as f64)))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut rows = Vec::new();
        for (p, grid) in self.counts.iter().enumerate() {
            for (r, row) in grid.iter().enumerate() {
                for (c, n) in row.iter().enumerate() {
                    rows.push(vec![pair_label(p), PEAKS[r].to_string(), PEAKS[c].to_string(), n.to_string()]);
                }
            }
        }
        table::write_csv(out, &["pair", "peak_row", "peak_col", "count"], rows)
    }

    /// Reads the CSV layout written by [`PeakHistogram::write_csv`]; cells
    /// that are absent count as zero, repeated cells accumulate.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, CircuitError> {
        let (header, rows) = table::read_csv(input)?;
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CircuitError::Malformed(format!("missing column `{name}`")))
        };
        let (ip, ir, ic, in_) = (col("pair")?, col("peak_row")?, col("peak_col")?, col("count")?);
        let peak = |s: &str| {
            PEAKS.iter().position(|p| *p == s).ok_or_else(|| CircuitError::Malformed(format!("unknown peak `{s}`")))
        };
        let mut h = PeakHistogram::default();
        for (line, row) in rows.iter().enumerate() {
            let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
            let p = pair_from_label(get(ip))
                .ok_or_else(|| CircuitError::Malformed(format!("row {}: unknown pair `{}`", line + 1, get(ip))))?;
            let n: u64 = get(in_)
                .parse()
                .map_err(|_| CircuitError::Malformed(format!("row {}: count `{}` is not a non-negative integer", line + 1, get(in_))))?;
            h.counts[p][peak(get(ir))?][peak(get(ic))?] += n;
        }
        Ok(h)
    }
}

/// Post-selected probabilities with first-order Poisson uncertainties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedStats {
    pub p20: f64,
    pub p11: f64,
    pub p02: f64,
    /// One standard deviation each, in `(p20, p11, p02)` order.
    pub uncertainties: [f64; 3],
    pub covariance: [[f64; 3]; 3],
}

impl NormalizedStats {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p20, self.p11, self.p02]
    }
}

/// Center and side sums per output configuration, `(20, 11, 02)` order.
fn peak_sums(cells: &[[[f64; 3]; 3]; 6]) -> ([f64; 3], [f64; 3]) {
    let mut center = [0.0; 3];
    let mut side = [0.0; 3];
    for (p, grid) in cells.iter().enumerate() {
        let k = match pair_kind(p) {
            PairKind::Bunched0 => 0,
            PairKind::Split => 1,
            PairKind::Bunched1 => 2,
        };
        center[k] += grid[CENTER.0][CENTER.1];
        side[k] += SIDES.iter().map(|&(r, c)| grid[r][c]).sum::<f64>();
    }
    (center, side)
}

/// Side-peak normalization of a coincidence histogram.
pub fn normalize_counts(hist: &PeakHistogram) -> Result<NormalizedStats, CircuitError> {
    normalize_expected(&hist.expected())
}

/// [`normalize_counts`] on real-valued (e.g. expected) counts.
pub fn normalize_expected(cells: &[[[f64; 3]; 3]; 6]) -> Result<NormalizedStats, CircuitError> {
    if cells.iter().flatten().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(CircuitError::Malformed("counts must be finite and non-negative".into()));
    }
    let (center, side) = peak_sums(cells);
    for (k, kind) in ["20", "11", "02"].into_iter().enumerate() {
        if side[k] <= 0.0 {
            return Err(CircuitError::NormalizationImpossible { kind });
        }
    }
    // the split configuration is spread over twice as many detector pairs
    let weight = [1.0, 2.0, 1.0];
    let x: [f64; 3] = std::array::from_fn(|k| weight[k] * center[k] / side[k]);
    let total: f64 = x.iter().sum();
    if total <= 0.0 {
        return Err(CircuitError::EmptyCenters);
    }
    let p: [f64; 3] = std::array::from_fn(|k| x[k] / total);

    let var_x: [f64; 3] = std::array::from_fn(|k| {
        let dc = weight[k] / side[k];
        let ds = x[k] / side[k];
        dc * dc * center[k].max(1.0) + ds * ds * side[k].max(1.0)
    });
    let jac = |i: usize, j: usize| (if i == j { total } else { 0.0 } - x[i]) / (total * total);
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| jac(i, k) * jac(j, k) * var_x[k]).sum();
        }
    }
    let uncertainties = std::array::from_fn(|k| covariance[k][k].sqrt());
    Ok(NormalizedStats { p20: p[0], p11: p[1], p02: p[2], uncertainties, covariance })
}

/// Detection efficiencies of the four detectors, path losses included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detectors {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for Detectors {
    fn default() -> Self {
        Detectors { a1: 1.0, a2: 1.0, b1: 1.0, b2: 1.0 }
    }
}

impl Detectors {
    pub fn as_array(&self) -> [f64; 4] {
        [self.a1, self.a2, self.b1, self.b2]
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        for (name, v) in ["a1", "a2", "b1", "b2"].into_iter().zip(self.as_array()) {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, v, "detector efficiency must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub model: ModelParams,
    #[serde(default)]
    pub detectors: Detectors,
}

/// Relative weight of each histogram cell. Center peaks carry the model
/// probabilities; side and remaining cells carry phase-independent weights.
pub fn expected_histogram(spec: &SynthesisSpec) -> Result<[[[f64; 3]; 3]; 6], CircuitError> {
    spec.detectors.validate()?;
    let stats = model_statistics(&spec.model)?.raw;
    let eff = spec.detectors.as_array();
    let mut cells = [[[0.0; 3]; 3]; 6];
    for (p, grid) in cells.iter_mut().enumerate() {
        let (a, b) = PAIRS[p];
        let e = eff[a] * eff[b];
        for row in grid.iter_mut() {
            row.fill(e / 256.0);
        }
        grid[CENTER.0][CENTER.1] = e * match pair_kind(p) {
            PairKind::Bunched0 => 0.5 * stats.p20,
            PairKind::Split => 0.25 * stats.p11,
            PairKind::Bunched1 => 0.5 * stats.p02,
        };
    }
    Ok(cells)
}

/// Draws `shots` coincidences from [`expected_histogram`], a multinomial
/// realised cell by cell as conditional binomials. Deterministic in `seed`.
pub fn synthesize_histogram(spec: &SynthesisSpec, shots: u64, seed: u64) -> Result<PeakHistogram, CircuitError> {
    if shots == 0 {
        return Err(invalid("shots", 0.0, "must be positive"));
    }
    let cells = expected_histogram(spec)?;
    let weights: Vec<f64> = cells.iter().flatten().flatten().copied().collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut remaining_mass: f64 = weights.iter().sum();
    let mut remaining = shots;
    let mut flat = Vec::with_capacity(weights.len());
    for w in &weights {
        let n = if remaining == 0 || *w <= 0.0 {
            0
        } else if *w >= remaining_mass {
            remaining
        } else {
            let p = (w / remaining_mass).clamp(0.0, 1.0);
            Binomial::new(remaining, p).expect("probability in [0, 1]").sample(&mut rng)
        };
        flat.push(n);
        remaining -= n;
        remaining_mass -= w;
    }
    // rounding in the running mass can strand the last few draws
    if remaining > 0 {
        let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        flat[last] += remaining;
    }
    let mut h = PeakHistogram::default();
    for (i, n) in flat.into_iter().enumerate() {
        h.counts[i / 9][(i / 3) % 3][i % 3] = n;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn qwp_at_quarter_turn_balances_the_bins() {
        for phi in [0.0, 0.3, 1.9, -2.2] {
            let f = excitation_fields(&TbiConfig { phi, ..Default::default() }).unwrap();
            assert!(close(f.early_intensity, f.late_intensity, 1e-14));
        }
    }

    #[test]
    fn relative_phase_follows_linear_phase() {
        let f = excitation_fields(&TbiConfig::default()).unwrap();
        assert!(close(f.relative_phase, -FRAC_PI_2, 1e-14));
        let base = TbiConfig { phi: 0.4, theta: 0.3, ..Default::default() };
        let a = excitation_fields(&base).unwrap();
        let b = excitation_fields(&TbiConfig { phi: 0.4 + PI, ..base }).unwrap();
        assert!(close(b.relative_phase - a.relative_phase, 2.0 * PI, 1e-12));
        assert!(close(a.early_intensity, b.early_intensity, 1e-14));
        assert!(close(a.relative_phase, 0.3 + 0.8 - FRAC_PI_2, 1e-12));
    }

    #[test]
    fn contrast_amplitude_cases() {
        let c = TbiConfig::default();
        assert_eq!(c.contrast_amplitude(), 1.0);
        let dark = TbiConfig { eta_la1: 0.0, eta_lb1: 0.0, ..c };
        let (curve, amp) = fringe_contrast(&dark, &[0.0, 1.0]).unwrap();
        assert_eq!(amp, 0.0);
        assert!(curve.iter().all(|v| v.abs() == 0.0));
    }

    #[test]
    fn contrast_zero_crossing() {
        let (curve, _) = fringe_contrast(&TbiConfig::default(), &[FRAC_PI_2, FRAC_PI_4]).unwrap();
        assert!(curve[0].abs() < 1e-15);
        assert!(close(curve[1], -1.0, 1e-15));
    }

    #[test]
    fn calibration_finds_the_arm_offset() {
        let sweep: Vec<f64> = (0..36).map(|k| k as f64 * PI / 18.0).collect();
        for offset in [0.0, 0.7, -1.1] {
            let cfg = TbiConfig { theta_prime: offset, eta_la1: 0.8, ..Default::default() };
            let phi0 = calibrate(&cfg, &sweep).unwrap();
            let expected = (offset / 2.0).rem_euclid(PI);
            assert!(close(phi0, expected, 1e-9), "{phi0} vs {expected}");
            let at = cfg.m_peak_intensity_a1(phi0);
            assert!(sweep.iter().all(|&p| cfg.m_peak_intensity_a1(p) >= at - 1e-12));
        }
    }

    #[test]
    fn closed_form_values() {
        let s = model_statistics(&ModelParams::new(0.0, 0.0, 0.0, 0.0)).unwrap().renormalized;
        assert!(close(s.p20, 1.0, 1e-15) && s.p11.abs() < 1e-15 && s.p02.abs() < 1e-15);
        for phi_nl in [0.0, 0.7, 2.5] {
            let s = model_statistics(&ModelParams::new(FRAC_PI_2, phi_nl, 0.0, 0.0)).unwrap().renormalized;
            assert!(close(s.p20, 0.25, 1e-15) && close(s.p11, 0.5, 1e-15) && close(s.p02, 0.25, 1e-15));
        }
        let s = model_statistics(&ModelParams::new(0.0, PI, 0.0, 0.0)).unwrap().renormalized;
        assert!(close(s.p02, 1.0, 1e-15) && s.p20.abs() < 1e-15);
    }

    #[test]
    fn raw_total_is_phase_independent() {
        for (phi, phi_nl, ell, eta) in [(0.3, 0.2, 0.4, 0.7), (2.0, 1.5, 0.9, 0.3), (-1.0, 3.0, 0.0, 1.0)] {
            let s = model_statistics(&ModelParams { phi, phi_nl, ell_nl: ell, eta, theta_perp: 0.0 }).unwrap();
            let expected = eta * eta / 2.0 * (1.0 + (1.0 - ell) * (1.0 - ell));
            assert!(close(s.raw.total(), expected, 1e-14));
        }
    }

    #[test]
    fn full_model_agrees_with_simplified_cosine() {
        let (r, th) = (0.6, -0.4);
        let phi_nl = (r * f64::cos(th)).acos();
        for k in 0..20 {
            let phi = k as f64 * 0.3;
            let a = full_model_statistics(phi, r, th, 0.8, 0.2);
            let b = closed_form_statistics(phi, phi_nl, 0.2, 0.8);
            assert!(close(a.p20, b.p20, 1e-14) && close(a.p11, b.p11, 1e-14) && close(a.p02, b.p02, 1e-14));
        }
    }

    fn flat_histogram(n: u64) -> PeakHistogram {
        PeakHistogram { counts: [[[n; 3]; 3]; 6] }
    }

    #[test]
    fn uniform_counts() {
        let s = normalize_counts(&flat_histogram(100)).unwrap();
        assert!(close(s.p20, 0.25, 1e-15) && close(s.p11, 0.5, 1e-15));
        assert!(close(s.p20 + s.p11 + s.p02, 1.0, 1e-12));
    }

    #[test]
    fn empty_split_center() {
        let mut h = flat_histogram(100);
        for p in 1..5 {
            h.counts[p][1][1] = 0;
        }
        let s = normalize_counts(&h).unwrap();
        assert!(close(s.p20, 0.5, 1e-15) && s.p11 == 0.0);
        assert!(s.uncertainties[1] > 0.0);
    }

    #[test]
    fn scaling_shrinks_errors() {
        let mut h = flat_histogram(100);
        h.counts[0][1][1] = 370;
        h.counts[3][1][1] = 12;
        let a = normalize_counts(&h).unwrap();
        let h10 = PeakHistogram { counts: h.counts.map(|g| g.map(|r| r.map(|c| c * 10))) };
        let b = normalize_counts(&h10).unwrap();
        for k in 0..3 {
            assert!(close(a.as_array()[k], b.as_array()[k], 1e-15));
            assert!(close(a.uncertainties[k] / b.uncertainties[k], 10f64.sqrt(), 1e-12));
        }
    }

    #[test]
    fn degenerate_inputs() {
        let mut h = flat_histogram(5);
        h.counts[5][0][2] = 0;
        h.counts[5][2][0] = 0;
        assert!(matches!(normalize_counts(&h), Err(CircuitError::NormalizationImpossible { kind: "02" })));
        let mut h = flat_histogram(5);
        for p in 0..6 {
            h.counts[p][1][1] = 0;
        }
        assert!(matches!(normalize_counts(&h), Err(CircuitError::EmptyCenters)));
    }

    #[test]
    fn expected_histogram_normalizes_exactly() {
        let model = ModelParams { phi: 0.9, phi_nl: 0.6, ell_nl: 0.25, eta: 0.5, theta_perp: 0.2 };
        let detectors = Detectors { a1: 0.9, a2: 0.35, b1: 0.6, b2: 0.77 };
        let s = normalize_expected(&expected_histogram(&SynthesisSpec { model, detectors }).unwrap()).unwrap();
        let m = model_statistics(&model).unwrap().renormalized;
        for k in 0..3 {
            assert!(close(s.as_array()[k], m.as_array()[k], 1e-12));
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_counts_every_shot() {
        let spec = SynthesisSpec { model: ModelParams::new(0.4, 0.3, 0.1, 0.0), detectors: Detectors::default() };
        let a = synthesize_histogram(&spec, 5000, 7).unwrap();
        assert_eq!(a, synthesize_histogram(&spec, 5000, 7).unwrap());
        assert_ne!(a, synthesize_histogram(&spec, 5000, 8).unwrap());
        assert_eq!(a.total(), 5000);
        assert_eq!(synthesize_histogram(&spec, 1, 3).unwrap().total(), 1);
        assert!(synthesize_histogram(&spec, 0, 3).is_err());
    }

    #[test]
    fn histogram_csv_round_trip() {
        let spec = SynthesisSpec { model: ModelParams::new(1.0, 0.3, 0.1, 0.0), detectors: Detectors::default() };
        let h = synthesize_histogram(&spec, 2000, 1).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(PeakHistogram::read_csv(&buf[..]).unwrap(), h);
        let bad = b"# schema=1\npair,peak_row,peak_col,count\na1-a3,E,E,3\n";
        assert!(PeakHistogram::read_csv(&bad[..]).is_err());
    }
}
