use std::fmt;
use std::process::ExitCode;

use nlcircuit::circuit::CircuitError;
use nlcircuit::fit::FitError;
use nlcircuit::scatter::ScatterError;
use nlcircuit::vibsim::VibError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Invalid,
    NonConvergence,
    Data,
    Io,
}

/// A failure attributed to one flag.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub flag: String,
    pub message: String,
}

impl CliError {
    fn new(kind: Kind, flag: impl Into<String>, message: impl Into<String>) -> Self {
        CliError { kind, flag: flag.into(), message: message.into() }
    }

    pub fn invalid(flag: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Kind::Invalid, flag, message)
    }

    pub fn nonconvergence(flag: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Kind::NonConvergence, flag, message)
    }

    pub fn data(flag: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Kind::Data, flag, message)
    }

    pub fn io(flag: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Kind::Io, flag, message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            Kind::Invalid => 2,
            Kind::NonConvergence => 3,
            Kind::Data => 4,
            Kind::Io => 5,
        })
    }

    pub fn from_scatter(e: ScatterError) -> Self {
        match e {
            ScatterError::InvalidParameter { name, .. } => Self::invalid(scatter_flag(name), e.to_string()),
            ScatterError::NonConvergence { .. } => Self::nonconvergence("--nodes", e.to_string()),
            ScatterError::Degenerate { .. } => Self::invalid("--delta", e.to_string()),
        }
    }

    pub fn from_circuit(e: CircuitError, data_flag: &str) -> Self {
        match e {
            CircuitError::InvalidParameter { name, .. } => Self::invalid(format!("--{}", name.replace('_', "-")), e.to_string()),
            CircuitError::Io(_) => Self::io(data_flag, e.to_string()),
            _ => Self::data(data_flag, e.to_string()),
        }
    }

    pub fn from_fit(e: FitError, data_flag: &str) -> Self {
        match e {
            FitError::Io(_) => Self::io(data_flag, e.to_string()),
            _ => Self::data(data_flag, e.to_string()),
        }
    }

    pub fn from_vib(e: VibError, spec_flag: &str) -> Self {
        match e {
            VibError::InvalidParameter { name: "steps", .. } => Self::invalid("--steps", e.to_string()),
            VibError::InvalidParameter { name: "tmax", .. } => Self::invalid("--tmax", e.to_string()),
            VibError::OutOfRange { .. } | VibError::BadCurve(_) => Self::invalid("--hardware", e.to_string()),
            VibError::Io(_) => Self::io(spec_flag, e.to_string()),
            _ => Self::invalid(spec_flag, e.to_string()),
        }
    }
}

fn scatter_flag(name: &str) -> &'static str {
    match name {
        "sigma" => "--sigma",
        "delta" => "--delta",
        "phi" => "--phi",
        "grid" => "--grid",
        "half_window" => "--window",
        "half_width" => "--half-width",
        "nodes" => "--nodes",
        "tau" => "--lifetime",
        _ => "--config",
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.flag, self.message)
    }
}
