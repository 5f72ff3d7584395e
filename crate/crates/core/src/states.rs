//! Exact amplitude-level evolution of two photons over two time-bin modes
//! plus their distinguishability ancillas.
//!
//! A state is stored as the complex amplitudes of the ten two-photon
//! occupation configurations over the mode slots `[0, 1, 0⊥, 1⊥]`. The
//! canonical ordering is fixed (see [`CONFIGURATIONS`]) so fixtures stay
//! stable.
//!
//! Linear layers are applied through the symmetric coefficient matrix
//! `M` of `Σ_ij M_ij a_i† a_j† |0⟩`, which transforms as `M → U M Uᵀ`
//! under the mode map `a_i† → Σ_k U_ki a_k†`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of mode slots tracked: early, late and one ancilla partner each.
pub const MODE_COUNT: usize = 4;

/// Number of two-photon configurations over [`MODE_COUNT`] modes.
pub const CONFIG_COUNT: usize = 10;

/// Raw probabilities below this are treated as "nothing detected".
pub const DEGENERATE_TOTAL: f64 = 1e-15;

/// Occupation numbers `(n_0, n_1, n_0⊥, n_1⊥)` in canonical order.
///
/// Physical-only configurations come first, then the mixed and
/// ancilla-only ones.
pub const CONFIGURATIONS: [[u8; MODE_COUNT]; CONFIG_COUNT] = [
    [2, 0, 0, 0],
    [0, 2, 0, 0],
    [1, 1, 0, 0],
    [1, 0, 1, 0],
    [1, 0, 0, 1],
    [0, 1, 1, 0],
    [0, 1, 0, 1],
    [0, 0, 2, 0],
    [0, 0, 0, 2],
    [0, 0, 1, 1],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeBin {
    Early,
    Late,
}

/// One of the four mode labels `0, 1, 0⊥, 1⊥`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub bin: TimeBin,
    pub ancilla: bool,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; MODE_COUNT] = [
        ModeLabel { bin: TimeBin::Early, ancilla: false },
        ModeLabel { bin: TimeBin::Late, ancilla: false },
        ModeLabel { bin: TimeBin::Early, ancilla: true },
        ModeLabel { bin: TimeBin::Late, ancilla: true },
    ];

    /// Slot index into the occupation tuple.
    pub fn slot(self) -> usize {
        match (self.bin, self.ancilla) {
            (TimeBin::Early, false) => 0,
            (TimeBin::Late, false) => 1,
            (TimeBin::Early, true) => 2,
            (TimeBin::Late, true) => 3,
        }
    }

    pub fn from_slot(slot: usize) -> ModeLabel {
        Self::ALL[slot]
    }
}

/// Time bin a slot is detected in; detectors do not resolve ancillas.
fn slot_bin(slot: usize) -> TimeBin {
    ModeLabel::from_slot(slot).bin
}

/// Index of the configuration with the given occupations, if it exists.
pub fn config_index(occupation: [u8; MODE_COUNT]) -> Option<usize> {
    CONFIGURATIONS.iter().position(|c| *c == occupation)
}

/// Slots occupied by the two photons of configuration `k` (repeated when
/// doubly occupied).
fn occupied_slots(k: usize) -> (usize, usize) {
    let occ = &CONFIGURATIONS[k];
    let mut slots = [0usize; 2];
    let mut n = 0;
    for (slot, &count) in occ.iter().enumerate() {
        for _ in 0..count {
            slots[n] = slot;
            n += 1;
        }
    }
    (slots[0], slots[1])
}

/// How the two photons of a configuration are spread over the time bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinPattern {
    BothEarly,
    BothLate,
    Split,
}

fn bin_pattern(k: usize) -> BinPattern {
    let (a, b) = occupied_slots(k);
    match (slot_bin(a), slot_bin(b)) {
        (TimeBin::Early, TimeBin::Early) => BinPattern::BothEarly,
        (TimeBin::Late, TimeBin::Late) => BinPattern::BothLate,
        _ => BinPattern::Split,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("layer parameter `{parameter}` = {value} is outside its allowed range")]
    InvalidLayer { parameter: &'static str, value: f64 },
    #[error("total detection probability {total:e} is too small to renormalize")]
    Degenerate { total: f64 },
}

/// A circuit layer acting on the two-photon state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `a₀† → (a₀†+a₁†)/√2`, `a₁† → (a₀†−a₁†)/√2`, same on the ancillas.
    BeamSplitterFirst,
    /// Same map as [`LayerSpec::BeamSplitterFirst`].
    BeamSplitterSecond,
    /// Multiplies every early-bin creation operator by `e^{iφ}`.
    LinearPhase { phi: f64 },
    /// Kerr-type scattering: bunched pairs pick up `η·e^{iφ_NL}`, split
    /// pairs `η(1−ℓ_NL)`.
    Nonlinear { phi_nl: f64, ell_nl: f64, eta: f64 },
    /// Rotates the early mode into its ancilla by `θ⊥`.
    Distinguishability { theta_perp: f64 },
    /// Arbitrary 2×2 mode map, column `i` is the image of mode `i`;
    /// applied identically on the ancilla pair. Must be unitary.
    ModeUnitary { matrix: [[C64; 2]; 2] },
    /// Lossless diagonal phases on the bunched-early, bunched-late and
    /// split configurations.
    ConfigPhases { phi_20: f64, phi_02: f64, phi_11: f64 },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), StateError> {
        fn finite(parameter: &'static str, value: f64) -> Result<(), StateError> {
            if value.is_finite() {
                Ok(())
            } else {
                Err(StateError::InvalidLayer { parameter, value })
            }
        }
        fn probability(parameter: &'static str, value: f64) -> Result<(), StateError> {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(StateError::InvalidLayer { parameter, value })
            }
        }
        match *self {
            LayerSpec::BeamSplitterFirst | LayerSpec::BeamSplitterSecond => Ok(()),
            LayerSpec::LinearPhase { phi } => finite("phi", phi),
            LayerSpec::Nonlinear { phi_nl, ell_nl, eta } => {
                finite("phi_nl", phi_nl)?;
                probability("ell_nl", ell_nl)?;
                probability("eta", eta)
            }
            LayerSpec::Distinguishability { theta_perp } => finite("theta_perp", theta_perp),
            LayerSpec::ModeUnitary { matrix } => {
                for row in &matrix {
                    for z in row {
                        finite("matrix", z.re)?;
                        finite("matrix", z.im)?;
                    }
                }
                let defect = unitarity_defect(&matrix);
                if defect > 1e-12 {
                    return Err(StateError::InvalidLayer { parameter: "matrix", value: defect });
                }
                Ok(())
            }
            LayerSpec::ConfigPhases { phi_20, phi_02, phi_11 } => {
                finite("phi_20", phi_20)?;
                finite("phi_02", phi_02)?;
                finite("phi_11", phi_11)
            }
        }
    }
}

/// Largest entry of `|U U† − 1|`.
pub fn unitarity_defect(u: &[[C64; 2]; 2]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..2 {
                s += u[i][k] * u[j][k].conj();
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).norm());
        }
    }
    worst
}

/// The layer sequence of the balanced nonlinear interferometer:
/// splitter, linear phase, scattering, distinguishability, splitter.
pub fn balanced_circuit(phi: f64, phi_nl: f64, ell_nl: f64, eta: f64, theta_perp: f64) -> [LayerSpec; 5] {
    [
        LayerSpec::BeamSplitterFirst,
        LayerSpec::LinearPhase { phi },
        LayerSpec::Nonlinear { phi_nl, ell_nl, eta },
        LayerSpec::Distinguishability { theta_perp },
        LayerSpec::BeamSplitterSecond,
    ]
}

/// Probabilities of the three detectable output configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputStats {
    pub p20: f64,
    pub p11: f64,
    pub p02: f64,
}

impl OutputStats {
    pub fn new(p20: f64, p11: f64, p02: f64) -> Self {
        OutputStats { p20, p11, p02 }
    }

    pub fn total(&self) -> f64 {
        self.p20 + self.p11 + self.p02
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p20, self.p11, self.p02]
    }

    /// Conditions on both photons being detected.
    pub fn renormalized(&self) -> Result<OutputStats, StateError> {
        let total = self.total();
        if !(total >= DEGENERATE_TOTAL) {
            return Err(StateError::Degenerate { total });
        }
        Ok(OutputStats::new(self.p20 / total, self.p11 / total, self.p02 / total))
    }
}

/// Raw detection probabilities together with their post-selected version.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionProbabilities {
    pub raw: OutputStats,
}

impl DetectionProbabilities {
    pub fn renormalized(&self) -> Result<OutputStats, StateError> {
        self.raw.renormalized()
    }
}

/// Complex amplitudes over the ten canonical configurations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoPhotonState {
    amplitudes: [C64; CONFIG_COUNT],
}

type ModeMatrix = [[C64; MODE_COUNT]; MODE_COUNT];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

impl TwoPhotonState {
    /// Both photons in the early mode, `|2,0,0,0⟩`.
    pub fn new_input() -> Self {
        Self::basis(0)
    }

    /// The `k`-th canonical configuration with unit amplitude.
    pub fn basis(k: usize) -> Self {
        let mut amplitudes = [ZERO; CONFIG_COUNT];
        amplitudes[k] = ONE;
        TwoPhotonState { amplitudes }
    }

    pub fn from_amplitudes(amplitudes: [C64; CONFIG_COUNT]) -> Self {
        TwoPhotonState { amplitudes }
    }

    pub fn amplitudes(&self) -> &[C64; CONFIG_COUNT] {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupation: [u8; MODE_COUNT]) -> Option<C64> {
        config_index(occupation).map(|k| self.amplitudes[k])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_layer(&self, layer: &LayerSpec) -> Result<TwoPhotonState, StateError> {
        layer.validate()?;
        Ok(match *layer {
            LayerSpec::BeamSplitterFirst | LayerSpec::BeamSplitterSecond => {
                let h = C64::new(FRAC_1_SQRT_2, 0.0);
                self.transform(&lift_pair([[h, h], [h, -h]]))
            }
            LayerSpec::LinearPhase { phi } => {
                let mut u = identity();
                let z = C64::from_polar(1.0, phi);
                u[0][0] = z;
                u[2][2] = z;
                self.transform(&u)
            }
            LayerSpec::ModeUnitary { matrix } => self.transform(&lift_pair(matrix)),
            LayerSpec::Distinguishability { theta_perp } => {
                let (s, c) = theta_perp.sin_cos();
                let mut u = identity();
                u[0][0] = C64::new(c, 0.0);
                u[2][0] = C64::new(s, 0.0);
                u[0][2] = C64::new(-s, 0.0);
                u[2][2] = C64::new(c, 0.0);
                self.transform(&u)
            }
            LayerSpec::Nonlinear { phi_nl, ell_nl, eta } => {
                let bunched = C64::from_polar(eta, phi_nl);
                let split = C64::new(eta * (1.0 - ell_nl), 0.0);
                self.scale_by_pattern(bunched, bunched, split)
            }
            LayerSpec::ConfigPhases { phi_20, phi_02, phi_11 } => self.scale_by_pattern(
                C64::from_polar(1.0, phi_20),
                C64::from_polar(1.0, phi_02),
                C64::from_polar(1.0, phi_11),
            ),
        })
    }

    /// Applies the layers in order.
    pub fn apply_all<'a, I>(&self, layers: I) -> Result<TwoPhotonState, StateError>
    where
        I: IntoIterator<Item = &'a LayerSpec>,
    {
        layers.into_iter().try_fold(*self, |s, l| s.apply_layer(l))
    }

    /// Output-bin probabilities; ancilla photons count towards their bin.
    pub fn detection_probabilities(&self) -> DetectionProbabilities {
        let mut raw = OutputStats::new(0.0, 0.0, 0.0);
        for (k, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            match bin_pattern(k) {
                BinPattern::BothEarly => raw.p20 += p,
                BinPattern::Split => raw.p11 += p,
                BinPattern::BothLate => raw.p02 += p,
            }
        }
        DetectionProbabilities { raw }
    }

    /// Ancilla slots follow the time bin they are partnered with.
    fn scale_by_pattern(&self, both_early: C64, both_late: C64, split: C64) -> TwoPhotonState {
        let mut out = *self;
        for (k, a) in out.amplitudes.iter_mut().enumerate() {
            *a *= match bin_pattern(k) {
                BinPattern::BothEarly => both_early,
                BinPattern::BothLate => both_late,
                BinPattern::Split => split,
            };
        }
        out
    }

    fn coefficient_matrix(&self) -> ModeMatrix {
        let mut m = [[ZERO; MODE_COUNT]; MODE_COUNT];
        for (k, &a) in self.amplitudes.iter().enumerate() {
            let (i, j) = occupied_slots(k);
            if i == j {
                m[i][i] = a / SQRT_2;
            } else {
                m[i][j] = a * 0.5;
                m[j][i] = a * 0.5;
            }
        }
        m
    }

    fn from_coefficient_matrix(m: &ModeMatrix) -> TwoPhotonState {
        let mut amplitudes = [ZERO; CONFIG_COUNT];
        for (k, amp) in amplitudes.iter_mut().enumerate() {
            let (i, j) = occupied_slots(k);
            *amp = if i == j { m[i][i] * SQRT_2 } else { m[i][j] + m[j][i] };
        }
        TwoPhotonState { amplitudes }
    }

    fn transform(&self, u: &ModeMatrix) -> TwoPhotonState {
        let m = self.coefficient_matrix();
        // U M Uᵀ
        let mut um = [[ZERO; MODE_COUNT]; MODE_COUNT];
        for i in 0..MODE_COUNT {
            for j in 0..MODE_COUNT {
                um[i][j] = (0..MODE_COUNT).map(|k| u[i][k] * m[k][j]).sum();
            }
        }
        let mut out = [[ZERO; MODE_COUNT]; MODE_COUNT];
        for i in 0..MODE_COUNT {
            for j in 0..MODE_COUNT {
                out[i][j] = (0..MODE_COUNT).map(|k| um[i][k] * u[j][k]).sum();
            }
        }
        Self::from_coefficient_matrix(&out)
    }
}

fn identity() -> ModeMatrix {
    let mut u = [[ZERO; MODE_COUNT]; MODE_COUNT];
    for (i, row) in u.iter_mut().enumerate() {
        row[i] = ONE;
    }
    u
}

/// Embeds a physical 2×2 map block-diagonally on `(0,1)` and `(0⊥,1⊥)`.
fn lift_pair(m: [[C64; 2]; 2]) -> ModeMatrix {
    let mut u = [[ZERO; MODE_COUNT]; MODE_COUNT];
    for i in 0..2 {
        for j in 0..2 {
            u[i][j] = m[i][j];
            u[i + 2][j + 2] = m[i][j];
        }
    }
    u
}
