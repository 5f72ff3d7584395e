//! Anharmonic two-mode vibrational dynamics on the nonlinear circuit.
//!
//! One Trotter step maps the localized modes onto the eigenmodes, applies
//! the phases each eigenconfiguration accumulates over the step, and maps
//! back. Two excitations start in one localized mode; the output is the
//! localized-mode occupancy.

use std::f64::consts::PI;
use std::io::{self, Read, Write};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::wrap_phase;
use crate::scatter::SweepRow;
use crate::states::{unitarity_defect, LayerSpec, StateError, TwoPhotonState};
use crate::table;

/// Speed of light in cm/s.
pub const SPEED_OF_LIGHT_CM: f64 = 2.997_924_58e10;

#[derive(Debug, Error)]
pub enum VibError {
    #[error("invalid `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("target nonlinear phase {target} exceeds the achievable maximum {max}")]
    OutOfRange { target: f64, max: f64 },
    #[error("characterization curve is unusable: {0}")]
    BadCurve(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("molecule file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Eigenfrequencies (cm⁻¹) of a two-mode anharmonic molecule and the map
/// from its localized modes to its eigenmodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub nu10: f64,
    pub nu01: f64,
    pub nu20: f64,
    pub nu02: f64,
    pub nu11: f64,
    /// Column `i` is the eigenmode expansion of localized mode `i`.
    pub localization: [[C64; 2]; 2],
}

/// Symmetric and antisymmetric stretch of H₂O.
pub fn water_spec() -> MoleculeSpec {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    MoleculeSpec {
        nu10: 3740.05,
        nu01: 3619.68,
        nu20: 7391.43,
        nu02: 7154.35,
        nu11: 7206.46,
        localization: [[C64::new(h, 0.0), C64::new(-h, 0.0)], [C64::new(h, 0.0), C64::new(h, 0.0)]],
    }
}

impl MoleculeSpec {
    pub fn validate(&self) -> Result<(), VibError> {
        for (name, v) in
            [("nu10", self.nu10), ("nu01", self.nu01), ("nu20", self.nu20), ("nu02", self.nu02), ("nu11", self.nu11)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(VibError::InvalidParameter { name, value: v, reason: "frequencies must be positive" });
            }
        }
        let defect = unitarity_defect(&self.localization);
        if !(defect <= 1e-12) {
            return Err(VibError::InvalidParameter { name: "localization", value: defect, reason: "must be unitary" });
        }
        Ok(())
    }

    pub fn from_json<R: Read>(input: R) -> Result<Self, VibError> {
        let spec: MoleculeSpec = serde_json::from_reader(input)?;
        spec.validate()?;
        Ok(spec)
    }

    fn inverse_localization(&self) -> [[C64; 2]; 2] {
        let u = &self.localization;
        [[u[0][0].conj(), u[1][0].conj()], [u[0][1].conj(), u[1][1].conj()]]
    }

    /// Period of the harmonic dynamics, in ps.
    pub fn harmonic_period_ps(&self) -> f64 {
        1e12 / (SPEED_OF_LIGHT_CM * (self.nu10 - self.nu01).abs())
    }
}

/// Phases for one evolution step, each wrapped to `(−π, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPhases {
    pub phi_lin: f64,
    pub phi_nl_0: f64,
    pub phi_nl_1: f64,
    pub phi_11_residual: f64,
}

fn accumulated(nu: f64, t_ps: f64) -> f64 {
    -2.0 * PI * SPEED_OF_LIGHT_CM * nu * t_ps * 1e-12
}

pub fn step_phases(t_ps: f64, spec: &MoleculeSpec, harmonic: bool) -> Result<StepPhases, VibError> {
    if !(t_ps >= 0.0 && t_ps.is_finite()) {
        return Err(VibError::InvalidParameter { name: "t", value: t_ps, reason: "must be non-negative" });
    }
    let t10 = accumulated(spec.nu10, t_ps);
    let t01 = accumulated(spec.nu01, t_ps);
    let phi_lin = wrap_phase(t10 - t01);
    if harmonic {
        return Ok(StepPhases { phi_lin, phi_nl_0: 0.0, phi_nl_1: 0.0, phi_11_residual: 0.0 });
    }
    Ok(StepPhases {
        phi_lin,
        phi_nl_0: wrap_phase(accumulated(spec.nu20, t_ps) - 2.0 * t10),
        phi_nl_1: wrap_phase(accumulated(spec.nu02, t_ps) - 2.0 * t01),
        phi_11_residual: wrap_phase(accumulated(spec.nu11, t_ps) - t10 - t01),
    })
}

/// Localized mode holding both excitations at `t = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    Left,
    Right,
}

/// Scattering curve used to emulate the hardware nonlinearity.
#[derive(Clone, Debug, PartialEq)]
pub struct HardwareModel {
    pub curve: Vec<SweepRow>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolveOptions {
    pub input: InputMode,
    /// Drop the phase on the split eigenconfiguration, as the circuit
    /// cannot program it.
    pub drop_residual: bool,
    /// Replace the ideal phase layer by the lossy emitter nonlinearity.
    pub hardware: Option<HardwareModel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub p_separate: f64,
    pub p_same_left: f64,
    pub p_same_right: f64,
    pub anharmonic: bool,
    pub phases: StepPhases,
}

/// Lossless phase layers of one step.
pub fn phase_layers(phases: &StepPhases, include_residual: bool) -> [LayerSpec; 2] {
    [
        LayerSpec::LinearPhase { phi: phases.phi_lin },
        LayerSpec::ConfigPhases {
            phi_20: phases.phi_nl_0,
            phi_02: phases.phi_nl_1,
            phi_11: if include_residual { phases.phi_11_residual } else { 0.0 },
        },
    ]
}

fn input_state(input: InputMode) -> TwoPhotonState {
    match input {
        InputMode::Left => TwoPhotonState::new_input(),
        InputMode::Right => TwoPhotonState::basis(1),
    }
}

/// Runs one step on an arbitrary state: localize → eigenbasis, `middle`,
/// eigenbasis → localized.
pub fn sandwich(state: &TwoPhotonState, spec: &MoleculeSpec, middle: &[LayerSpec]) -> Result<TwoPhotonState, VibError> {
    let mut layers = vec![LayerSpec::ModeUnitary { matrix: spec.localization }];
    layers.extend_from_slice(middle);
    layers.push(LayerSpec::ModeUnitary { matrix: spec.inverse_localization() });
    Ok(state.apply_all(&layers)?)
}

pub fn evolve(t_ps: f64, spec: &MoleculeSpec, harmonic: bool) -> Result<TracePoint, VibError> {
    evolve_with(t_ps, spec, harmonic, &EvolveOptions::default())
}

pub fn evolve_with(t_ps: f64, spec: &MoleculeSpec, harmonic: bool, opts: &EvolveOptions) -> Result<TracePoint, VibError> {
    spec.validate()?;
    let phases = step_phases(t_ps, spec, harmonic)?;
    let middle: Vec<LayerSpec> = match &opts.hardware {
        Some(hw) if !harmonic => hardware_layers(&phases, hw)?.to_vec(),
        _ => phase_layers(&phases, !opts.drop_residual).to_vec(),
    };
    let out = sandwich(&input_state(opts.input), spec, &middle)?;
    let stats = out.detection_probabilities().renormalized()?;
    Ok(TracePoint {
        t: t_ps,
        p_separate: stats.p11,
        p_same_left: stats.p20,
        p_same_right: stats.p02,
        anharmonic: !harmonic,
        phases,
    })
}

/// The emitter applies one nonlinear phase to both eigenmodes, with the
/// loss that detuning implies.
fn hardware_layers(phases: &StepPhases, hw: &HardwareModel) -> Result<[LayerSpec; 2], VibError> {
    let mean = C64::from_polar(1.0, phases.phi_nl_0) + C64::from_polar(1.0, phases.phi_nl_1);
    let target = if mean.norm() > 0.0 { mean.arg() } else { 0.0 };
    let max = max_phase(&hw.curve)?;
    let magnitude = target.abs().min(max);
    let delta = phase_to_detuning(magnitude, &hw.curve)?;
    let p = interpolate_curve(delta, &hw.curve)?;
    Ok([
        LayerSpec::LinearPhase { phi: phases.phi_lin },
        LayerSpec::Nonlinear {
            phi_nl: magnitude.copysign(target),
            ell_nl: p.1.clamp(0.0, 1.0),
            eta: p.2.clamp(0.0, 1.0),
        },
    ])
}

/// Uniform grid `0..=t_max` with both variants at every point.
pub fn trace(t_max_ps: f64, n_steps: usize, spec: &MoleculeSpec) -> Result<Vec<(TracePoint, TracePoint)>, VibError> {
    trace_with(t_max_ps, n_steps, spec, &EvolveOptions::default())
}

pub fn trace_with(
    t_max_ps: f64,
    n_steps: usize,
    spec: &MoleculeSpec,
    opts: &EvolveOptions,
) -> Result<Vec<(TracePoint, TracePoint)>, VibError> {
    if n_steps < 2 {
        return Err(VibError::InvalidParameter { name: "steps", value: n_steps as f64, reason: "need at least 2" });
    }
    if !(t_max_ps > 0.0 && t_max_ps.is_finite()) {
        return Err(VibError::InvalidParameter { name: "tmax", value: t_max_ps, reason: "must be positive" });
    }
    spec.validate()?;
    (0..n_steps)
        .into_par_iter()
        .map(|k| {
            let t = t_max_ps * k as f64 / (n_steps - 1) as f64;
            Ok((evolve_with(t, spec, false, opts)?, evolve_with(t, spec, true, opts)?))
        })
        .collect()
}

pub const TRACE_COLUMNS: [&str; 8] =
    ["t_ps", "variant", "p_separate", "p_same_left", "p_same_right", "phi_lin", "phi_nl_0", "phi_nl_1"];

/// Writes both variants per time point; `anharmonic_label` names the
/// anharmonic rows in the `variant` column.
pub fn write_trace_csv<W: Write>(out: W, points: &[(TracePoint, TracePoint)], anharmonic_label: &str) -> io::Result<()> {
    let rows = points.iter().flat_map(|(a, h)| [a, h]).map(|p| {
        vec![
            table::fmt(p.t),
            if p.anharmonic { anharmonic_label } else { "harmonic" }.to_string(),
            table::fmt(p.p_separate),
            table::fmt(p.p_same_left),
            table::fmt(p.p_same_right),
            table::fmt(p.phases.phi_lin),
            table::fmt(p.phases.phi_nl_0),
            table::fmt(p.phases.phi_nl_1),
        ]
    });
    table::write_csv(out, &TRACE_COLUMNS, rows)
}

/// Non-negative-detuning branch of a sweep, sorted by detuning.
fn branch(curve: &[SweepRow]) -> Result<Vec<(f64, f64, f64, f64)>, VibError> {
    let mut rows: Vec<(f64, f64, f64, f64)> = curve
        .iter()
        .filter(|r| r.delta >= 0.0)
        .map(|r| (r.delta, r.params.phi_nl, r.params.ell_nl, r.params.eta))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if rows.len() < 2 {
        return Err(VibError::BadCurve("need at least two rows with non-negative detuning".into()));
    }
    if let Some(w) = rows.windows(2).find(|w| !(w[1].1 < w[0].1) || w[1].0 == w[0].0) {
        return Err(VibError::BadCurve(format!(
            "phi_nl is not strictly decreasing in detuning near delta = {}",
            w[1].0
        )));
    }
    Ok(rows)
}

/// Largest nonlinear phase the curve offers.
pub fn max_phase(curve: &[SweepRow]) -> Result<f64, VibError> {
    Ok(branch(curve)?[0].1)
}

/// Detuning that yields `phi_nl_target` on the characterized curve, by
/// linear interpolation. Targets below the far-detuned end of the table
/// map to that end.
pub fn phase_to_detuning(phi_nl_target: f64, curve: &[SweepRow]) -> Result<f64, VibError> {
    if !(phi_nl_target >= 0.0 && phi_nl_target.is_finite()) {
        return Err(VibError::InvalidParameter {
            name: "phi_nl",
            value: phi_nl_target,
            reason: "target must be a non-negative magnitude",
        });
    }
    let rows = branch(curve)?;
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    if phi_nl_target > first.1 {
        return Err(VibError::OutOfRange { target: phi_nl_target, max: first.1 });
    }
    if phi_nl_target <= last.1 {
        return Ok(last.0);
    }
    let k = rows.iter().position(|r| r.1 < phi_nl_target).expect("target above the table minimum");
    let (a, b) = (rows[k - 1], rows[k]);
    let s = (a.1 - phi_nl_target) / (a.1 - b.1);
    Ok(a.0 + s * (b.0 - a.0))
}

/// `(phi_nl, ell_nl, eta)` linearly interpolated at detuning `|delta|`.
pub fn interpolate_curve(delta: f64, curve: &[SweepRow]) -> Result<(f64, f64, f64), VibError> {
    let rows = branch(curve)?;
    let d = delta.abs();
    let k = rows.iter().position(|r| r.0 >= d).unwrap_or(rows.len() - 1).max(1);
    let (a, b) = (rows[k - 1], rows[k]);
    let s = ((d - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
    let lerp = |x: f64, y: f64| x + s * (y - x);
    Ok((lerp(a.1, b.1), lerp(a.2, b.2), lerp(a.3, b.3)))
}
