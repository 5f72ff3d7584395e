use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nlcircuit::circuit::{self, Detectors, ModelParams, SynthesisSpec, CENTER};
use nlcircuit::fit::{self, NlFitOptions, RtFitOptions};
use nlcircuit::scatter::{self, OutputPort, PulseSpec, QuadratureConfig, TimeGrid, SWEEP_COLUMNS};
use nlcircuit::table::{self, fmt};
use nlcircuit::vibsim::{self, EvolveOptions, HardwareModel, InputMode, MoleculeSpec};
use serde_json::json;

use crate::error::CliError;
use crate::settings::{parse_angle, parse_real, Settings};
use crate::{CharacterizeArgs, Common, FitArgs, FringeArgs, JtiArgs, WaterArgs};

fn settings(
    mut flags: Vec<(&'static str, Option<String>)>,
    switches: Vec<(&'static str, bool)>,
    common: Common,
) -> Result<Settings, CliError> {
    flags.extend([
        ("out", common.out),
        ("lifetime", common.lifetime),
        ("nodes", common.nodes),
        ("half-width", common.half_width),
    ]);
    Settings::new(flags, switches, common.config.as_ref())
}

fn out_dir(s: &Settings) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(s.text("out")?.unwrap_or_else(|| ".".into()));
    fs::create_dir_all(&dir).map_err(|e| CliError::io("--out", format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io("--out", format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut buf = Vec::new();
    table::write_csv(&mut buf, header, rows).expect("writing to memory");
    buf
}

fn json_bytes(value: &impl serde::Serialize) -> Vec<u8> {
    let mut buf = serde_json::to_vec_pretty(value).expect("serializable");
    buf.push(b'\n');
    buf
}

fn quadrature(s: &Settings) -> Result<QuadratureConfig, CliError> {
    let d = QuadratureConfig::default();
    let quad = QuadratureConfig {
        half_width: s.real("half-width", d.half_width)?,
        nodes: s.count("nodes", d.nodes as u64)? as usize,
    };
    quad.validate().map_err(CliError::from_scatter)?;
    Ok(quad)
}

fn pulse(s: &Settings) -> Result<PulseSpec, CliError> {
    let sigma = s.frequency("sigma", 1.0)?;
    let delta = s.frequency("delta", 0.0)?;
    PulseSpec::new(sigma, delta).map_err(CliError::from_scatter)
}

pub fn jti(a: JtiArgs) -> Result<(), CliError> {
    let s = settings(
        vec![
            ("delta", a.delta),
            ("sigma", a.sigma),
            ("phi", a.phi),
            ("grid", a.grid),
            ("window", a.window),
            ("port", a.port),
        ],
        vec![],
        a.common,
    )?;
    let pulse = pulse(&s)?;
    let quad = quadrature(&s)?;
    let phi = s.angle("phi", 0.0)?;
    let d = TimeGrid::default();
    let grid = TimeGrid { half_window: s.time_frame("window", d.half_window)?, points: s.count("grid", d.points as u64)? as usize };
    grid.validate().map_err(CliError::from_scatter)?;
    let port = s.text("port")?.unwrap_or_else(|| "20".into());
    let at = |p| scatter::circuit_jti(&pulse, phi, p, &grid, &quad);
    let matrix = match port.as_str() {
        "20" => at(OutputPort::Bunched0),
        "11" => at(OutputPort::Split),
        "02" => at(OutputPort::Bunched1),
        "pair" => scatter::jti(&pulse, &grid, &quad),
        "independent" => scatter::independent_jti(&pulse, &grid, &quad),
        other => return Err(CliError::invalid("--port", format!("unknown port `{other}` (use 20, 11, 02, pair or independent)"))),
    }
    .map_err(CliError::from_scatter)?;
    for w in &matrix.warnings {
        eprintln!("warning: {w}");
    }
    if matrix.max() == 0.0 {
        eprintln!("warning: --port {port} carries no intensity at --phi {phi}; matrix left at zero");
    }
    let m = matrix.normalized();
    let ps: Vec<f64> = m.times.iter().map(|t| s.frame.ps_from_time(*t)).collect();
    let mut rows = Vec::with_capacity(m.times.len() * m.times.len());
    for (i, row) in m.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            rows.push(vec![fmt(m.times[i]), fmt(m.times[j]), fmt(ps[i]), fmt(ps[j]), fmt(*v)]);
        }
    }
    write(&out_dir(&s)?, "jti.csv", csv_bytes(&["t1", "t2", "t1_ps", "t2_ps", "intensity"], rows))
}

/// Seed of the `k`-th phase point, decorrelated from its neighbours.
fn point_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn fringe(a: FringeArgs) -> Result<(), CliError> {
    let s = settings(
        vec![
            ("delta", a.delta),
            ("sigma", a.sigma),
            ("phi", a.phi),
            ("theta-perp", a.theta_perp),
            ("shots", a.shots),
            ("seed", a.seed),
        ],
        vec![],
        a.common,
    )?;
    let pulse = pulse(&s)?;
    let quad = quadrature(&s)?;
    let default_phis: Vec<f64> = (0..=120).map(|k| 2.0 * PI * k as f64 / 120.0).collect();
    let phis = s.list("phi", &default_phis, parse_angle)?;
    let theta_perp = s.angle("theta-perp", 0.0)?;
    let shots = s.count("shots", 0)?;
    let seed = s.count("seed", 1)?;
    let params = scatter::nonlinear_params(&pulse, &quad).map_err(CliError::from_scatter)?;
    let dir = out_dir(&s)?;

    let models: Vec<ModelParams> = phis
        .iter()
        .map(|&phi| ModelParams { phi, phi_nl: params.phi_nl, ell_nl: params.ell_nl, eta: params.eta, theta_perp })
        .collect();
    let mut stats = Vec::with_capacity(models.len());
    for m in &models {
        stats.push(circuit::model_statistics(m).map_err(|e| CliError::from_circuit(e, "--delta"))?);
    }
    let rows = phis
        .iter()
        .zip(&stats)
        .map(|(phi, st)| {
            let (n, r) = (&st.renormalized, &st.raw);
            vec![fmt(*phi), fmt(n.p20), fmt(n.p11), fmt(n.p02), fmt(r.p20), fmt(r.p11), fmt(r.p02)]
        })
        .collect();
    write(&dir, "fringe.csv", csv_bytes(&["phi", "p20", "p11", "p02", "p20_raw", "p11_raw", "p02_raw"], rows))?;

    let p20: Vec<f64> = stats.iter().map(|st| st.renormalized.p20).collect();
    let p02: Vec<f64> = stats.iter().map(|st| st.renormalized.p02).collect();
    let visibility = circuit::fringe_visibility(&p20);
    let mut summary = json!({
        "delta": pulse.delta,
        "sigma": pulse.sigma,
        "theta_perp": theta_perp,
        "nonlinearity": params,
        "visibility_p20": visibility,
        "visibility_p02": circuit::fringe_visibility(&p02),
    });

    if shots > 0 {
        let mut rows = Vec::with_capacity(models.len());
        let mut measured = Vec::with_capacity(models.len());
        for (k, m) in models.iter().enumerate() {
            let spec = SynthesisSpec { model: *m, detectors: Detectors::default() };
            let hist = circuit::synthesize_histogram(&spec, shots, point_seed(seed, k))
                .map_err(|e| CliError::from_circuit(e, "--shots"))?;
            let norm = circuit::normalize_counts(&hist).map_err(|e| CliError::from_circuit(e, "--shots"))?;
            let centers: u64 = hist.counts.iter().map(|g| g[CENTER.0][CENTER.1]).sum();
            let u = norm.uncertainties;
            measured.push(norm.p20);
            rows.push(vec![
                fmt(m.phi),
                fmt(norm.p20),
                fmt(norm.p11),
                fmt(norm.p02),
                fmt(u[0]),
                fmt(u[1]),
                fmt(u[2]),
                centers.to_string(),
            ]);
        }
        let header = ["phi", "p20", "p11", "p02", "p20_err", "p11_err", "p02_err", "counts"];
        write(&dir, "fringe_data.csv", csv_bytes(&header, rows))?;
        summary["shots"] = json!(shots);
        summary["seed"] = json!(seed);
        summary["measured_visibility_p20"] = json!(circuit::fringe_visibility(&measured));
    }
    write(&dir, "fringe_summary.json", json_bytes(&summary))?;
    println!("fringe visibility {visibility:.3}");
    Ok(())
}

pub fn characterize(a: CharacterizeArgs) -> Result<(), CliError> {
    let s = settings(vec![("delta", a.delta), ("sigma", a.sigma)], vec![], a.common)?;
    let quad = quadrature(&s)?;
    let default_deltas: Vec<f64> = (0..=40).map(|k| -5.0 + 0.25 * k as f64).collect();
    let deltas = s.frequency_list("delta", &default_deltas)?;
    let sigmas = s.frequency_list("sigma", &[1.0])?;
    let sweep = scatter::characterize(&deltas, &sigmas, &quad).map_err(CliError::from_scatter)?;
    let dir = out_dir(&s)?;
    let rows = sweep.iter().map(|r| r.record().iter().map(|v| fmt(*v)).collect()).collect();
    write(&dir, "characterize.csv", csv_bytes(&SWEEP_COLUMNS, rows))?;
    let rows = sweep
        .iter()
        .map(|r| {
            let one = r.params.single_transmission();
            vec![fmt(r.delta), fmt(r.sigma), fmt(one * one), fmt(r.params.pair_transmission())]
        })
        .collect();
    write(&dir, "transmission.csv", csv_bytes(&["delta", "sigma", "single_photon_term", "two_photon_term"], rows))
}

fn columns(path: &str, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io("--input", format!("cannot open {path}: {e}")))?;
    let (header, rows) = table::read_csv(BufReader::new(file)).map_err(|e| CliError::data("--input", e.to_string()))?;
    names
        .iter()
        .map(|name| {
            let i = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::data("--input", format!("{path}: missing column `{name}`")))?;
            rows.iter()
                .enumerate()
                .map(|(line, row)| {
                    let v = row.get(i).map(String::as_str).unwrap_or("");
                    v.parse::<f64>()
                        .map_err(|_| CliError::data("--input", format!("{path}: row {}: `{v}` is not a number", line + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let s = settings(
        vec![("input", a.input), ("model", a.model), ("gamma", a.gamma), ("gamma-d", a.gamma_d), ("seed", a.seed)],
        vec![("theta-perp", a.theta_perp)],
        a.common,
    )?;
    let input = s.text("input")?.ok_or_else(|| CliError::invalid("--input", "an input CSV is required"))?;
    let seed = s.count("seed", 0)?;
    let model = s.text("model")?.unwrap_or_else(|| "nl".into());
    let result = match model.as_str() {
        "nl" => {
            let file = File::open(&input).map_err(|e| CliError::io("--input", format!("cannot open {input}: {e}")))?;
            let data = fit::read_stats_csv(BufReader::new(file)).map_err(|e| CliError::from_fit(e, "--input"))?;
            let opts = NlFitOptions { fit_theta_perp: s.switch("theta-perp")?, seed };
            fit::fit_nl(&data, &opts)
        }
        "fringe" => {
            let c = columns(&input, &["phi", "p20"])?;
            fit::fit_fringe(&c[0], &c[1], seed)
        }
        "rt" => {
            let c = columns(&input, &["omega", "transmission"])?;
            let gamma = s.text("gamma")?.map(|g| parse_real(&g)).transpose().map_err(|m| CliError::invalid("--gamma", m))?;
            let opts = RtFitOptions { gamma, gamma_d: s.real("gamma-d", 0.0)?, seed };
            fit::fit_rt(&c[0], &c[1], &opts)
        }
        other => return Err(CliError::invalid("--model", format!("unknown model `{other}` (use nl, fringe or rt)"))),
    }
    .map_err(|e| CliError::from_fit(e, "--input"))?;
    write(&out_dir(&s)?, "fit.json", json_bytes(&result))?;
    if !result.converged {
        return Err(CliError::nonconvergence(
            "--input",
            format!("fit did not converge after {} evaluations; fit.json holds the last estimate", result.evaluations),
        ));
    }
    Ok(())
}

pub fn water(a: WaterArgs) -> Result<(), CliError> {
    let s = settings(
        vec![
            ("tmax", a.tmax),
            ("steps", a.steps),
            ("molecule", a.molecule),
            ("input", a.input),
            ("sigma", a.sigma),
            ("delta", a.delta),
        ],
        vec![("drop-residual", a.drop_residual), ("hardware", a.hardware)],
        a.common,
    )?;
    let t_max = s.time_ps("tmax", 0.5)?;
    let steps = s.count("steps", 51)? as usize;
    let spec = match s.text("molecule")? {
        None => vibsim::water_spec(),
        Some(path) => {
            let file = File::open(&path).map_err(|e| CliError::io("--molecule", format!("cannot open {path}: {e}")))?;
            MoleculeSpec::from_json(BufReader::new(file)).map_err(|e| CliError::from_vib(e, "--molecule"))?
        }
    };
    let input = match s.text("input")?.as_deref() {
        None | Some("left") => InputMode::Left,
        Some("right") => InputMode::Right,
        Some(other) => return Err(CliError::invalid("--input", format!("unknown mode `{other}` (use left or right)"))),
    };
    let hardware = if s.switch("hardware")? {
        let quad = quadrature(&s)?;
        let sigma = s.frequency("sigma", 1.0)?;
        let default_deltas: Vec<f64> = (0..=24).map(|k| 0.25 * k as f64).collect();
        let deltas = s.frequency_list("delta", &default_deltas)?;
        let curve = scatter::characterize(&deltas, &[sigma], &quad).map_err(CliError::from_scatter)?;
        Some(HardwareModel { curve })
    } else {
        None
    };
    let label = if hardware.is_some() { "anharmonic_hardware" } else { "anharmonic" };
    let opts = EvolveOptions { input, drop_residual: s.switch("drop-residual")?, hardware };
    let points = vibsim::trace_with(t_max, steps, &spec, &opts).map_err(|e| CliError::from_vib(e, "--molecule"))?;
    let mut buf = Vec::new();
    vibsim::write_trace_csv(&mut buf, &points, label).expect("writing to memory");
    write(&out_dir(&s)?, "water.csv", buf)
}
