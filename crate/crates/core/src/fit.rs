//! Least-squares parameter extraction.
//!
//! Everything is driven by a bounded Nelder–Mead simplex with jittered
//! restarts. Standard errors come from a finite-difference Hessian of the
//! objective at the optimum, read as a χ² surface (`cov = 2H⁻¹`); unweighted
//! fits rescale by the residual variance.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{self, harmonic_fit, ModelParams, NormalizedStats};
use crate::quadrature::simpson;
use crate::table;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: BTreeMap<String, f64>,
    /// Final objective value (sum of squares or χ²).
    pub residual: f64,
    pub std_errors: Option<BTreeMap<String, f64>>,
    pub converged: bool,
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl FitResult {
    /// Value of a named parameter; NaN when absent.
    pub fn get(&self, name: &str) -> f64 {
        self.parameters.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.std_errors.as_ref().and_then(|s| s.get(name).copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub x_tol: f64,
    /// Value spread allowed across the simplex, scaled by `1 + |f|`.
    pub f_tol: f64,
    pub max_evaluations: usize,
    /// Jittered restarts on top of the run from `x0`.
    pub restarts: usize,
    pub seed: u64,
    /// Box constraints per coordinate; empty means unbounded.
    pub bounds: Vec<(f64, f64)>,
    /// Initial simplex edge per coordinate; empty picks one from `x0`.
    pub steps: Vec<f64>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            x_tol: 1e-8,
            f_tol: 1e-10,
            max_evaluations: 10_000,
            restarts: 3,
            seed: 0,
            bounds: Vec::new(),
            steps: Vec::new(),
        }
    }
}

/// Raw optimizer output.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl MinimizeOptions {
    fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }

    fn steps_for(&self, x0: &[f64]) -> Vec<f64> {
        if self.steps.len() == x0.len() {
            return self.steps.clone();
        }
        x0.iter()
            .enumerate()
            .map(|(i, &v)| {
                let s = if v != 0.0 { 0.05 * v.abs() } else { 0.00025 };
                match self.bounds.get(i) {
                    Some(&(lo, hi)) if hi > lo => s.min(0.5 * (hi - lo)),
                    _ => s,
                }
            })
            .collect()
    }
}

fn guarded<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn nelder_mead<F>(f: &F, x0: &[f64], steps: &[f64], opts: &MinimizeOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let evaluations = std::cell::Cell::new(0usize);
    let eval = |x: &mut Vec<f64>| {
        opts.clamp(x);
        evaluations.set(evaluations.get() + 1);
        guarded(f, x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let f0 = eval(&mut start);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        v[i] += steps[i];
        if let Some(&(lo, hi)) = opts.bounds.get(i) {
            if v[i] > hi {
                v[i] = start[i] - steps[i];
            }
            if v[i] < lo {
                v[i] = lo.max(start[i] - steps[i]);
            }
        }
        let fv = eval(&mut v);
        simplex.push((v, fv));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread_f = simplex[1..].iter().map(|(_, fv)| (fv - best.1).abs()).fold(0.0, f64::max);
        if spread_x <= opts.x_tol && spread_f <= opts.f_tol * (1.0 + best.1.abs()) {
            converged = true;
            break;
        }
        if evaluations.get() >= opts.max_evaluations {
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (worst.0[j] - centroid[j])).collect() };

        let mut xr = along(-1.0);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = along(-2.0);
            let fe = eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (mut xc, outside) = if fr < worst.1 { (along(-0.5), true) } else { (along(0.5), false) };
            let fc = eval(&mut xc);
            if (outside && fc <= fr) || (!outside && fc < worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let mut v: Vec<f64> = best.iter().zip(&item.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let fv = eval(&mut v);
                    *item = (v, fv);
                }
            }
        }
    }
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, converged, evaluations: evaluations.get() }
}

/// Bounded Nelder–Mead with jittered restarts run in parallel, followed by
/// a polishing run from the best point.
pub fn optimize<F>(f: &F, x0: &[f64], opts: &MinimizeOptions) -> Result<Minimum, FitError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if x0.is_empty() {
        return Err(FitError::InvalidInput("no parameters to optimize".into()));
    }
    if !opts.bounds.is_empty() && opts.bounds.len() != x0.len() {
        return Err(FitError::InvalidInput("bounds do not match the parameter count".into()));
    }
    let mut start = x0.to_vec();
    opts.clamp(&mut start);
    if !f(&start).is_finite() {
        return Err(FitError::NonFiniteStart);
    }
    let steps = opts.steps_for(&start);
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut starts = vec![start.clone()];
    for _ in 0..opts.restarts {
        let mut s: Vec<f64> = start.iter().zip(&steps).map(|(x, h)| x + 2.0 * h * rng.random_range(-1.0..1.0)).collect();
        opts.clamp(&mut s);
        starts.push(s);
    }
    let runs: Vec<Minimum> = starts.par_iter().map(|s| nelder_mead(f, s, &steps, opts)).collect();
    let total: usize = runs.iter().map(|r| r.evaluations).sum();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value).then(a.evaluations.cmp(&b.evaluations)))
        .expect("at least one run");
    let polish = nelder_mead(f, &best.x, &steps, opts);
    let evaluations = total + polish.evaluations;
    Ok(if polish.value <= best.value {
        Minimum { evaluations, ..polish }
    } else {
        Minimum { evaluations, converged: best.converged && polish.converged, ..best }
    })
}

/// `2H⁻¹` from a central-difference Hessian. Near a bound the stencil is
/// shifted inwards. `None` if the Hessian is not positive definite.
pub fn curvature_covariance<F>(f: &F, x: &[f64], bounds: &[(f64, f64)]) -> Option<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
    let mut c = x.to_vec();
    for i in 0..n {
        if let Some(&(lo, hi)) = bounds.get(i) {
            if hi - lo > 2.0 * h[i] {
                c[i] = c[i].clamp(lo + h[i], hi - h[i]);
            }
        }
    }
    let at = |di: &[(usize, f64)]| {
        let mut p = c.clone();
        for &(i, d) in di {
            p[i] += d;
        }
        f(&p)
    };
    let f0 = f(&c);
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        hess[i][i] = (at(&[(i, h[i])]) - 2.0 * f0 + at(&[(i, -h[i])])) / (h[i] * h[i]);
        for j in 0..i {
            let v = (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])]) - at(&[(i, -h[i]), (j, h[j])])
                + at(&[(i, -h[i]), (j, -h[j])]))
                / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    let inv = invert(&hess)?;
    if (0..n).any(|i| !(inv[i][i] > 0.0) || !inv[i][i].is_finite()) {
        return None;
    }
    Some(inv.into_iter().map(|row| row.into_iter().map(|v| 2.0 * v).collect()).collect())
}

fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        let p = a[col][col];
        a[col].iter_mut().for_each(|v| *v /= p);
        for row in 0..n {
            if row != col {
                let factor = a[row][col];
                if factor != 0.0 {
                    let pivot_row = a[col].clone();
                    a[row].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= factor * pv);
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

fn assemble(
    names: &[&str],
    min: &Minimum,
    covariance: Option<Vec<Vec<f64>>>,
    variance_scale: f64,
) -> (FitResult, Option<Vec<Vec<f64>>>) {
    let parameters = names.iter().zip(&min.x).map(|(n, v)| (n.to_string(), *v)).collect();
    let mut notes = Vec::new();
    let covariance = covariance.map(|c| {
        c.into_iter().map(|row| row.into_iter().map(|v| v * variance_scale).collect::<Vec<f64>>()).collect::<Vec<_>>()
    });
    let std_errors = match (&covariance, min.converged) {
        (Some(c), true) => Some(names.iter().enumerate().map(|(i, n)| (n.to_string(), c[i][i].sqrt())).collect()),
        (None, true) => {
            notes.push("curvature at the optimum is singular; standard errors unavailable".into());
            None
        }
        _ => None,
    };
    (
        FitResult { parameters, residual: min.value, std_errors, converged: min.converged, evaluations: min.evaluations, notes },
        covariance,
    )
}

/// Minimizes `objective` from `x0`. Parameters are named `x0, x1, …` and
/// standard errors treat the objective as a χ² surface.
pub fn minimize<F>(objective: F, x0: &[f64], opts: &MinimizeOptions) -> Result<FitResult, FitError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let min = optimize(&objective, x0, opts)?;
    let cov = if min.converged { curvature_covariance(&objective, &min.x, &opts.bounds) } else { None };
    let names: Vec<String> = (0..x0.len()).map(|i| format!("x{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(assemble(&refs, &min, cov, 1.0).0)
}

/// Emitter characterization for the CW transmission model. Frequencies
/// share whatever unit the spectrum's detuning axis uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QdCharacterization {
    /// Natural linewidth Γ (FWHM).
    pub gamma: f64,
    /// Pure dephasing rate Γ_d.
    #[serde(default)]
    pub gamma_d: f64,
    pub beta: f64,
    /// Standard deviation of the spectral-diffusion Gaussian.
    #[serde(default)]
    pub sigma_sd: f64,
    /// Saturation ratio `n_r/n_c`.
    #[serde(default)]
    pub saturation: f64,
}

impl QdCharacterization {
    pub fn validate(&self) -> Result<(), FitError> {
        let ok = self.gamma > 0.0
            && self.gamma.is_finite()
            && self.gamma_d >= 0.0
            && self.gamma_d.is_finite()
            && (0.0..=1.0).contains(&self.beta)
            && self.sigma_sd >= 0.0
            && self.sigma_sd.is_finite()
            && self.saturation >= 0.0
            && self.saturation.is_finite();
        if ok {
            Ok(())
        } else {
            Err(FitError::InvalidInput(format!("emitter characterization out of range: {self:?}")))
        }
    }

    /// Power-broadened Lorentzian FWHM.
    pub fn lorentzian_fwhm(&self) -> f64 {
        (self.gamma + self.gamma_d) * (1.0 + self.saturation).sqrt()
    }

    /// Extinction depth without spectral diffusion.
    pub fn depth(&self) -> f64 {
        self.beta * (2.0 - self.beta) / ((1.0 + 2.0 * self.gamma_d / self.gamma) * (1.0 + self.saturation))
    }
}

const VOIGT_HALF_WIDTH: f64 = 8.0;

fn lorentzian(x: f64, fwhm: f64) -> f64 {
    let g = 0.5 * fwhm;
    g / (PI * (x * x + g * g))
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Unit-area Voigt profile by direct convolution.
pub fn voigt(x: f64, fwhm: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return lorentzian(x, fwhm);
    }
    if fwhm == 0.0 {
        return gaussian(x, sigma);
    }
    let g = 0.5 * fwhm;
    let reach = VOIGT_HALF_WIDTH * sigma;
    if g >= sigma || x.abs() > reach + sigma {
        // integrate over the Gaussian variable
        let panels = (2.0 * reach / (sigma / 8.0)).ceil() as usize;
        simpson(|u| gaussian(u, sigma) * lorentzian(x - u, fwhm), -reach, reach, panels)
    } else {
        // y = g·sinh(s) flattens the Lorentzian peak
        let span = x.abs() + reach;
        let s_max = (span / g).asinh();
        let ds = sigma / (8.0 * span);
        let panels = (2.0 * s_max / ds).ceil() as usize;
        simpson(|s| gaussian(x - g * s.sinh(), sigma) / (PI * s.cosh()), -s_max, s_max, panels)
    }
}

/// CW transmission through the emitter at detuning `omega`.
pub fn rt_spectrum(omega: f64, c: &QdCharacterization) -> f64 {
    let fwhm = c.lorentzian_fwhm();
    1.0 - c.depth() * voigt(omega, fwhm, c.sigma_sd) / lorentzian(0.0, fwhm)
}

/// Which emitter quantities are held fixed in [`fit_rt`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtFitOptions {
    /// Fixed natural linewidth; when absent the Lorentzian width is taken
    /// as unsaturated and lifetime-limited.
    pub gamma: Option<f64>,
    pub gamma_d: f64,
    pub seed: u64,
}

impl Default for RtFitOptions {
    fn default() -> Self {
        RtFitOptions { gamma: None, gamma_d: 0.0, seed: 0 }
    }
}

fn characterization_for(beta: f64, sigma_sd: f64, fwhm: f64, opts: &RtFitOptions) -> QdCharacterization {
    match opts.gamma {
        Some(gamma) => {
            let base = gamma + opts.gamma_d;
            QdCharacterization { gamma, gamma_d: opts.gamma_d, beta, sigma_sd, saturation: ((fwhm / base).powi(2) - 1.0).max(0.0) }
        }
        None => QdCharacterization { gamma: fwhm, gamma_d: 0.0, beta, sigma_sd, saturation: 0.0 },
    }
}

fn validate_xy(xs: &[f64], ys: &[f64], min_points: usize) -> Result<(), FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::InvalidInput(format!("{} abscissae but {} values", xs.len(), ys.len())));
    }
    if xs.len() < min_points {
        return Err(FitError::InvalidInput(format!("need at least {min_points} points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("data contain non-finite values".into()));
    }
    Ok(())
}

/// Voigt fit of a transmission spectrum for `(beta, sigma_sd, gamma_fwhm)`.
pub fn fit_rt(omega: &[f64], transmission: &[f64], opts: &RtFitOptions) -> Result<FitResult, FitError> {
    validate_xy(omega, transmission, 8)?;
    let lo = omega.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = omega.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(FitError::InvalidInput("spectrum spans no detuning range".into()));
    }
    let min_fwhm = opts.gamma.map_or(span * 1e-6, |g| g + opts.gamma_d);
    if let Some(g) = opts.gamma {
        if !(g > 0.0 && opts.gamma_d >= 0.0) {
            return Err(FitError::InvalidInput("fixed linewidths must be positive".into()));
        }
    }
    // starting guesses from the dip
    let (imin, tmin) = transmission.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, t)| if t < a.1 { (i, t) } else { a });
    let depth = (1.0 - tmin).clamp(0.0, 1.0);
    let half = 1.0 - depth / 2.0;
    let below = omega.iter().zip(transmission).filter(|(_, t)| **t <= half).map(|(w, _)| *w);
    let (wl, wh) = below.fold((omega[imin], omega[imin]), |(a, b), w| (a.min(w), b.max(w)));
    let width = (wh - wl).max(span / omega.len() as f64);
    let fwhm0 = width.max(min_fwhm * 1.01);
    let beta0 = (1.0 - (1.0 - depth).sqrt()).clamp(0.05, 0.95);
    let x0 = [beta0, 0.3 * width, fwhm0];
    let options = MinimizeOptions {
        bounds: vec![(0.0, 1.0), (0.0, span), (min_fwhm, 2.0 * span)],
        steps: vec![0.1, 0.2 * width, 0.3 * fwhm0],
        seed: opts.seed,
        ..Default::default()
    };
    let rss = |p: &[f64]| -> f64 {
        let c = characterization_for(p[0], p[1], p[2], opts);
        omega.iter().zip(transmission).map(|(&w, &t)| (rt_spectrum(w, &c) - t).powi(2)).sum()
    };
    let min = optimize(&rss, &x0, &options)?;
    let dof = omega.len().saturating_sub(3).max(1) as f64;
    let cov = if min.converged { curvature_covariance(&rss, &min.x, &options.bounds) } else { None };
    let (mut result, _) = assemble(&["beta", "sigma_sd", "gamma_fwhm"], &min, cov, min.value / dof);
    let c = characterization_for(min.x[0], min.x[1], min.x[2], opts);
    result.parameters.insert("saturation".into(), c.saturation);
    if min.x[0] < 1e-6 {
        result.notes.push("no dip: sigma_sd and gamma_fwhm are unidentifiable".into());
    }
    Ok(result)
}

/// Fits `A·cos(2φ − 2φ₀) + B` and reports `visibility = A/B`.
pub fn fit_fringe(phi: &[f64], p20: &[f64], seed: u64) -> Result<FitResult, FitError> {
    validate_xy(phi, p20, 4)?;
    let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < PI * (1.0 - 1e-9) {
        return Err(FitError::InvalidInput(format!("phase sweep covers {:.4} rad; a full period is π", hi - lo)));
    }
    let (b, p, q) = harmonic_fit(phi, p20).ok_or_else(|| FitError::InvalidInput("phases do not resolve a fringe".into()))?;
    let amplitude = p.hypot(q);
    let scale = p20.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if amplitude <= 1e-12 * scale {
        let mut parameters = BTreeMap::new();
        parameters.insert("visibility".to_string(), 0.0);
        parameters.insert("phi0".to_string(), 0.0);
        parameters.insert("offset".to_string(), b);
        parameters.insert("amplitude".to_string(), 0.0);
        let residual = p20.iter().map(|y| (y - b).powi(2)).sum();
        return Ok(FitResult {
            parameters,
            residual,
            std_errors: None,
            converged: true,
            evaluations: 0,
            notes: vec!["no fringe: phi0 is unidentifiable".into()],
        });
    }
    let phi0 = (0.5 * q.atan2(p)).rem_euclid(PI);
    let rss = |x: &[f64]| -> f64 {
        phi.iter().zip(p20).map(|(&f, &y)| (x[0] * (2.0 * f - 2.0 * x[1]).cos() + x[2] - y).powi(2)).sum()
    };
    let options = MinimizeOptions {
        bounds: vec![(0.0, f64::INFINITY), (phi0 - PI, phi0 + PI), (f64::NEG_INFINITY, f64::INFINITY)],
        steps: vec![0.05 * amplitude, 0.05, 0.05 * amplitude],
        seed,
        ..Default::default()
    };
    let min = optimize(&rss, &[amplitude, phi0, b], &options)?;
    let dof = phi.len().saturating_sub(3).max(1) as f64;
    // noiseless data leave a zero residual; keep the curvature meaningful
    let s2 = (min.value / dof).max(f64::MIN_POSITIVE);
    let cov = if min.converged { curvature_covariance(&rss, &min.x, &options.bounds) } else { None };
    let (mut result, cov) = assemble(&["amplitude", "phi0", "offset"], &min, cov, s2);
    let (a, b) = (min.x[0], min.x[2]);
    result.parameters.insert("phi0".into(), min.x[1].rem_euclid(PI));
    result.parameters.insert("visibility".into(), if b != 0.0 { a / b } else { 0.0 });
    if let (Some(errs), Some(c)) = (result.std_errors.as_mut(), cov) {
        // delta method for A/B
        let (da, db) = (1.0 / b, -a / (b * b));
        let var = da * da * c[0][0] + 2.0 * da * db * c[0][2] + db * db * c[2][2];
        errs.insert("visibility".into(), var.max(0.0).sqrt());
    }
    Ok(result)
}

/// One normalized-statistics observation at linear phase `phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsPoint {
    pub phi: f64,
    pub p20: f64,
    pub p11: f64,
    pub p02: f64,
    /// Post-selected coincidences behind the point, for multinomial weights.
    #[serde(default)]
    pub counts: Option<f64>,
    /// Covariance of `(p20, p11, p02)`, e.g. from [`circuit::normalize_counts`].
    #[serde(default)]
    pub covariance: Option<[[f64; 3]; 3]>,
}

impl StatsPoint {
    pub fn from_normalized(phi: f64, s: &NormalizedStats) -> Self {
        StatsPoint { phi, p20: s.p20, p11: s.p11, p02: s.p02, counts: None, covariance: Some(s.covariance) }
    }

    /// Inverse covariance of `(p20, p02)`; `None` for unweighted points.
    fn weight(&self) -> Option<[[f64; 2]; 2]> {
        let (v00, v01, v11) = if let Some(c) = self.covariance {
            (c[0][0], c[0][2], c[2][2])
        } else if let Some(n) = self.counts.filter(|n| *n > 0.0) {
            let a = self.p20.clamp(1.0 / n, 1.0 - 1.0 / n);
            let b = self.p02.clamp(1.0 / n, 1.0 - 1.0 / n);
            (a * (1.0 - a) / n, -a * b / n, b * (1.0 - b) / n)
        } else {
            return None;
        };
        let det = v00 * v11 - v01 * v01;
        if !(det > 0.0) {
            return None;
        }
        Some([[v11 / det, -v01 / det], [-v01 / det, v00 / det]])
    }
}

/// Reads `phi,p20,p11,p02[,counts]` rows.
pub fn read_stats_csv<R: BufRead>(input: R) -> Result<Vec<StatsPoint>, FitError> {
    let (header, rows) = table::read_csv(input)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| FitError::InvalidInput(format!("missing column `{name}`")));
    let (ip, i20, i11, i02) = (need("phi")?, need("p20")?, need("p11")?, need("p02")?);
    let ic = col("counts");
    rows.iter()
        .enumerate()
        .map(|(line, row)| {
            let num = |i: usize| -> Result<f64, FitError> {
                let s = row.get(i).map(String::as_str).unwrap_or("");
                s.parse().map_err(|_| FitError::InvalidInput(format!("row {}: `{s}` is not a number", line + 1)))
            };
            let counts = match ic {
                Some(i) if row.get(i).is_some_and(|s| !s.is_empty()) => Some(num(i)?),
                _ => None,
            };
            Ok(StatsPoint { phi: num(ip)?, p20: num(i20)?, p11: num(i11)?, p02: num(i02)?, counts, covariance: None })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlFitOptions {
    /// Also fit the distinguishability rotation.
    pub fit_theta_perp: bool,
    pub seed: u64,
}

impl Default for NlFitOptions {
    fn default() -> Self {
        NlFitOptions { fit_theta_perp: false, seed: 0 }
    }
}

fn model_p(phi: f64, x: &[f64]) -> [f64; 3] {
    let theta_perp = x.get(2).copied().unwrap_or(0.0);
    let params = ModelParams::new(phi, x[0], x[1].clamp(0.0, 1.0), theta_perp);
    match circuit::model_statistics(&params) {
        Ok(s) => s.renormalized.as_array(),
        Err(_) => [f64::NAN; 3],
    }
}

/// Fits `(phi_nl, ell_nl[, theta_perp])` of the simplified model to
/// normalized output statistics.
pub fn fit_nl(data: &[StatsPoint], opts: &NlFitOptions) -> Result<FitResult, FitError> {
    if data.len() < 8 {
        return Err(FitError::InvalidInput(format!("need at least 8 phase points, got {}", data.len())));
    }
    for (i, d) in data.iter().enumerate() {
        let vals = [d.phi, d.p20, d.p11, d.p02];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidInput(format!("point {i} is not finite")));
        }
        if (d.p20 + d.p11 + d.p02 - 1.0).abs() > 1e-6 {
            return Err(FitError::InvalidInput(format!("point {i} is not renormalized (sum {})", d.p20 + d.p11 + d.p02)));
        }
    }
    let weights: Vec<Option<[[f64; 2]; 2]>> = data.iter().map(StatsPoint::weight).collect();
    let weighted = weights.iter().all(Option::is_some);
    let objective = |x: &[f64]| -> f64 {
        data.iter()
            .zip(&weights)
            .map(|(d, w)| {
                let m = model_p(d.phi, x);
                let r = [m[0] - d.p20, m[2] - d.p02];
                match (weighted, w) {
                    (true, Some(w)) => r[0] * r[0] * w[0][0] + 2.0 * r[0] * r[1] * w[0][1] + r[1] * r[1] * w[1][1],
                    _ => r[0] * r[0] + r[1] * r[1],
                }
            })
            .sum()
    };

    // coarse grid for a start inside the right basin
    let mut x0 = vec![0.5, 0.2];
    let mut best = f64::INFINITY;
    for i in 0..=16 {
        for j in 0..=10 {
            let cand = [PI * i as f64 / 16.0, 0.95 * j as f64 / 10.0];
            let v = objective(&cand);
            if v < best {
                best = v;
                x0 = cand.to_vec();
            }
        }
    }
    let mut names = vec!["phi_nl", "ell_nl"];
    let mut bounds = vec![(0.0, PI), (0.0, 1.0)];
    let mut steps = vec![0.1, 0.05];
    if opts.fit_theta_perp {
        names.push("theta_perp");
        bounds.push((0.0, PI / 2.0));
        steps.push(0.1);
        x0.push(0.2);
    }
    let options = MinimizeOptions { bounds, steps, seed: opts.seed, ..Default::default() };
    let min = optimize(&objective, &x0, &options)?;
    let cov = if min.converged { curvature_covariance(&objective, &min.x, &options.bounds) } else { None };
    let scale = if weighted {
        1.0
    } else {
        let dof = (2 * data.len()).saturating_sub(names.len()).max(1) as f64;
        (min.value / dof).max(f64::MIN_POSITIVE)
    };
    let (mut result, _) = assemble(&names, &min, cov, scale);
    if opts.fit_theta_perp {
        let t = min.x[2];
        result.parameters.insert("distinguishability".into(), t.sin().powi(2));
        if let Some(errs) = result.std_errors.as_mut() {
            let dt = errs["theta_perp"];
            errs.insert("distinguishability".into(), (2.0 * t).sin().abs() * dt);
        }
    }
    result.notes.push("only |phi_nl| is identifiable; the sign of the nonlinear phase does not enter the statistics".into());
    if !weighted {
        result.notes.push("unweighted fit; errors scaled by the residual variance".into());
    }
    Ok(result)
}
