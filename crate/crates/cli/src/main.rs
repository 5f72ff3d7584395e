//! `nlcircuit`: regenerate JTI maps, fringes, nonlinearity sweeps, fits and
//! vibrational traces as CSV/JSON.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nlcircuit", version, about = "Photonic circuit with an emitter-based two-photon nonlinearity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Clone)]
pub struct Common {
    /// JSON object of flag values, keyed by long flag name; flags win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Emitter lifetime used for unit conversion (default 311ps).
    #[arg(long, allow_hyphen_values = true)]
    pub lifetime: Option<String>,
    /// Quadrature nodes per axis before the doubling check.
    #[arg(long, allow_hyphen_values = true)]
    pub nodes: Option<String>,
    /// Integration half-width in pulse widths.
    #[arg(long, allow_hyphen_values = true)]
    pub half_width: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Joint temporal intensity at one circuit output.
    Jti(JtiArgs),
    /// Output statistics against the linear phase.
    Fringe(FringeArgs),
    /// Nonlinear phase, loss and transmission against detuning.
    Characterize(CharacterizeArgs),
    /// Fit a model to a statistics or spectrum CSV.
    Fit(FitArgs),
    /// Two-mode vibrational dynamics of a molecule.
    Water(WaterArgs),
}

#[derive(Args)]
pub struct JtiArgs {
    /// Detuning, in 1/τ or with a GHz/MHz/cm-1 suffix.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Spectral width of the pulse amplitude.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    /// Linear phase in rad (or deg/pi suffix).
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<String>,
    /// Grid points per time axis.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Half-width of the time window, in τ or with a ps/ns suffix.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Output: 20, 11, 02, pair (no circuit) or independent.
    #[arg(long, allow_hyphen_values = true)]
    pub port: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct FringeArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    /// Phases: value, list `a,b,...` or range `start:stop:count`.
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<String>,
    /// Distinguishability rotation angle.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_perp: Option<String>,
    /// Coincidences per phase for synthetic data; 0 disables.
    #[arg(long, allow_hyphen_values = true)]
    pub shots: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct CharacterizeArgs {
    /// Detunings: value, list or `start:stop:count`.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Pulse widths: value, list or `start:stop:count`.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct FitArgs {
    /// Input CSV.
    #[arg(long, allow_hyphen_values = true)]
    pub input: Option<String>,
    /// nl (phi,p20,p11,p02), fringe (phi,p20) or rt (omega,transmission).
    #[arg(long, allow_hyphen_values = true)]
    pub model: Option<String>,
    /// Also fit the distinguishability angle (nl model).
    #[arg(long)]
    pub theta_perp: bool,
    /// Fixed natural linewidth for the rt model.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// Pure dephasing rate for the rt model.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_d: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct WaterArgs {
    /// End of the trace (bare numbers are ps).
    #[arg(long, allow_hyphen_values = true)]
    pub tmax: Option<String>,
    /// Number of time points including both ends.
    #[arg(long, allow_hyphen_values = true)]
    pub steps: Option<String>,
    /// MoleculeSpec JSON; water when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub molecule: Option<String>,
    /// Mode initially holding both quanta: left or right.
    #[arg(long, allow_hyphen_values = true)]
    pub input: Option<String>,
    /// Omit the phase on the split configuration.
    #[arg(long)]
    pub drop_residual: bool,
    /// Emulate the emitter nonlinearity, with its loss, in the anharmonic trace.
    #[arg(long)]
    pub hardware: bool,
    /// Pulse width for the emulated nonlinearity.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    /// Detunings of the emulation curve.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Jti(a) => commands::jti(a),
        Command::Fringe(a) => commands::fringe(a),
        Command::Characterize(a) => commands::characterize(a),
        Command::Fit(a) => commands::fit(a),
        Command::Water(a) => commands::water(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
