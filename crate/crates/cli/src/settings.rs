//! Flag/config-file merging and physical-unit parsing.
//!
//! Every setting is looked up by its long flag name: the command-line value
//! wins, then the same key in the `--config` JSON object, then the default.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use nlcircuit::scatter::EmitterFrame;
use serde_json::Value;

use crate::error::CliError;

/// GHz per cm⁻¹.
const GHZ_PER_WAVENUMBER: f64 = 29.979_245_8;

pub struct Settings {
    flags: BTreeMap<&'static str, String>,
    switches: BTreeMap<&'static str, bool>,
    config: serde_json::Map<String, Value>,
    pub frame: EmitterFrame,
}

impl Settings {
    /// `flags` and `switches` name every key the subcommand accepts; any
    /// other key in the config file is rejected.
    pub fn new(
        flags: Vec<(&'static str, Option<String>)>,
        switches: Vec<(&'static str, bool)>,
        config_path: Option<&PathBuf>,
    ) -> Result<Self, CliError> {
        let config = match config_path {
            None => serde_json::Map::new(),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::io("--config", format!("cannot read {}: {e}", path.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => return Err(CliError::invalid("--config", "config file must hold a JSON object")),
                    Err(e) => return Err(CliError::invalid("--config", format!("{}: {e}", path.display()))),
                }
            }
        };
        let known: Vec<&str> = flags.iter().map(|f| f.0).chain(switches.iter().map(|s| s.0)).collect();
        if let Some(key) = config.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(CliError::invalid("--config", format!("unknown key `{key}`; expected one of {}", known.join(", "))));
        }
        let mut s = Settings {
            flags: flags.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect(),
            switches: switches.into_iter().collect(),
            config,
            frame: EmitterFrame::default(),
        };
        if let Some(lifetime) = s.raw("lifetime")? {
            let ps = parse_time_ps(&lifetime).map_err(|m| CliError::invalid("--lifetime", m))?;
            s.frame = EmitterFrame::from_lifetime_ps(ps).map_err(|e| CliError::invalid("--lifetime", e.to_string()))?;
        }
        Ok(s)
    }

    /// Flag value, else config value, as text.
    pub fn raw(&self, name: &str) -> Result<Option<String>, CliError> {
        if let Some(v) = self.flags.get(name) {
            return Ok(Some(v.clone()));
        }
        match self.config.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(other) => Err(CliError::invalid(flag(name), format!("config value {other} is not a number or string"))),
        }
    }

    pub fn switch(&self, name: &str) -> Result<bool, CliError> {
        if self.switches.get(name).copied().unwrap_or(false) {
            return Ok(true);
        }
        match self.config.get(name) {
            None | Some(Value::Null) => Ok(false),
            Some(Value::Bool(b)) => Ok(*b),
            Some(other) => Err(CliError::invalid(flag(name), format!("config value {other} is not a boolean"))),
        }
    }

    fn parsed<T>(&self, name: &str, default: T, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, CliError> {
        match self.raw(name)? {
            None => Ok(default),
            Some(text) => parse(text.trim()).map_err(|m| CliError::invalid(flag(name), m)),
        }
    }

    pub fn real(&self, name: &str, default: f64) -> Result<f64, CliError> {
        self.parsed(name, default, parse_real)
    }

    /// Angle in radians; a `deg` suffix converts.
    pub fn angle(&self, name: &str, default: f64) -> Result<f64, CliError> {
        self.parsed(name, default, parse_angle)
    }

    /// Dimensionless angular frequency; physical suffixes convert.
    pub fn frequency(&self, name: &str, default: f64) -> Result<f64, CliError> {
        self.parsed(name, default, |s| parse_frequency(s, &self.frame))
    }

    pub fn time_ps(&self, name: &str, default: f64) -> Result<f64, CliError> {
        self.parsed(name, default, parse_time_ps)
    }

    /// Time in emitter units; physical suffixes convert.
    pub fn time_frame(&self, name: &str, default: f64) -> Result<f64, CliError> {
        self.parsed(name, default, |s| match split_unit(s) {
            (v, "") => parse_real(v),
            _ => parse_time_ps(s).map(|ps| self.frame.time_from_ps(ps)),
        })
    }

    pub fn count(&self, name: &str, default: u64) -> Result<u64, CliError> {
        self.parsed(name, default, |s| {
            let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))?;
            if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(format!("`{s}` is not a non-negative integer"))
            }
        })
    }

    /// A single value, a comma list, or `start:stop:count`, each value with
    /// the same unit handling as `parse`.
    pub fn list(&self, name: &str, default: &[f64], parse: impl Fn(&str) -> Result<f64, String>) -> Result<Vec<f64>, CliError> {
        self.parsed(name, default.to_vec(), |s| parse_list(s, &parse))
    }

    pub fn frequency_list(&self, name: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        self.list(name, default, |s| parse_frequency(s, &self.frame))
    }

    pub fn text(&self, name: &str) -> Result<Option<String>, CliError> {
        self.raw(name)
    }
}

pub fn flag(name: &str) -> String {
    format!("--{name}")
}

fn split_unit(s: &str) -> (&str, &str) {
    let idx = s
        .char_indices()
        .find(|(i, c)| c.is_ascii_alphabetic() && !is_exponent(s, *i))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    (s[..idx].trim(), s[idx..].trim())
}

/// `e` or `E` between digits and a sign/digit is a float exponent, not a unit.
fn is_exponent(s: &str, i: usize) -> bool {
    let b = s.as_bytes();
    matches!(b[i], b'e' | b'E')
        && i > 0
        && (b[i - 1].is_ascii_digit() || b[i - 1] == b'.')
        && b.get(i + 1).is_some_and(|c| c.is_ascii_digit() || *c == b'-' || *c == b'+')
}

pub fn parse_real(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

pub fn parse_angle(s: &str) -> Result<f64, String> {
    match split_unit(s) {
        (v, "" | "rad") => parse_real(v),
        (v, "deg") => parse_real(v).map(f64::to_radians),
        (v, "pi") => {
            let v = match v {
                "" | "+" => "1",
                "-" => "-1",
                v => v,
            };
            parse_real(v).map(|x| x * PI)
        }
        (_, unit) => Err(format!("unknown angle unit `{unit}` (use rad, deg or pi)")),
    }
}

pub fn parse_frequency(s: &str, frame: &EmitterFrame) -> Result<f64, String> {
    let (v, unit) = split_unit(s);
    let x = parse_real(v)?;
    match unit {
        "" => Ok(x),
        "GHz" => Ok(frame.omega_from_ghz(x)),
        "MHz" => Ok(frame.omega_from_ghz(x * 1e-3)),
        "THz" => Ok(frame.omega_from_ghz(x * 1e3)),
        "cm-1" | "cm^-1" | "cm⁻¹" => Ok(frame.omega_from_ghz(x * GHZ_PER_WAVENUMBER)),
        other => Err(format!("unknown frequency unit `{other}` (use GHz, MHz, THz or cm-1; bare numbers are in units of 1/τ)")),
    }
}

/// Bare numbers are picoseconds.
pub fn parse_time_ps(s: &str) -> Result<f64, String> {
    let (v, unit) = split_unit(s);
    let x = parse_real(v)?;
    match unit {
        "" | "ps" => Ok(x),
        "fs" => Ok(x * 1e-3),
        "ns" => Ok(x * 1e3),
        other => Err(format!("unknown time unit `{other}` (use fs, ps or ns)")),
    }
}

fn parse_list(s: &str, parse: &impl Fn(&str) -> Result<f64, String>) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let values = match parts.as_slice() {
        [start, stop, count] => {
            let (a, b) = (parse(start)?, parse(stop)?);
            let n: usize = count.parse().map_err(|_| format!("range count `{count}` is not an integer"))?;
            match n {
                0 => return Err("range count must be at least 1".into()),
                1 => vec![a],
                _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
            }
        }
        [_] => s.split(',').map(|p| parse(p.trim())).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("`{s}` is neither a list `a,b,…` nor a range `start:stop:count`")),
    };
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_split_from_exponents() {
        assert_eq!(split_unit("1e-3GHz"), ("1e-3", "GHz"));
        assert_eq!(split_unit("2.5"), ("2.5", ""));
        assert_eq!(split_unit("3 cm-1"), ("3", "cm-1"));
        assert_eq!(split_unit("1E+2ps"), ("1E+2", "ps"));
    }

    #[test]
    fn frequency_conversion() {
        let frame = EmitterFrame::default();
        let w = parse_frequency("1GHz", &frame).unwrap();
        assert!((w - 2.0 * PI * 155.5e-3).abs() < 1e-12);
        let k = parse_frequency("1cm-1", &frame).unwrap();
        assert!((k / w - GHZ_PER_WAVENUMBER).abs() < 1e-9);
        assert!(parse_frequency("1Hz", &frame).is_err());
    }

    #[test]
    fn lists_and_ranges() {
        let p = |s: &str| parse_real(s);
        assert_eq!(parse_list("0:1:3", &p).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_list("1, 2,4", &p).unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(parse_list("0:1", &p).is_err());
        assert!(parse_list("0:1:0", &p).is_err());
    }

    #[test]
    fn angles() {
        assert!((parse_angle("90deg").unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((parse_angle("pi").unwrap() - PI).abs() < 1e-15);
        assert!((parse_angle("0.5pi").unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((parse_angle("-pi").unwrap() + PI).abs() < 1e-15);
    }
}
