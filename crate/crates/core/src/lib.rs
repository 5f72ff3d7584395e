//! Simulation and analysis of two-mode nonlinear time-bin photonic circuits.
//!
//! - [`states`]: exact two-photon amplitude evolution through circuit layers.
//! - [`scatter`]: photon scattering off a two-level emitter and the
//!   effective nonlinear parameters it induces.
//! - [`circuit`]: interferometer field model, closed-form output statistics,
//!   coincidence normalization and synthetic histograms.
//! - [`fit`]: least-squares extraction of emitter and circuit parameters.
//! - [`vibsim`]: anharmonic two-mode vibrational dynamics mapped onto the circuit.

pub mod circuit;
pub mod fit;
pub mod quadrature;
pub mod scatter;
pub mod states;
pub mod table;
pub mod vibsim;
