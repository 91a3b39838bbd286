//! GRAPE pulse synthesis for a three-qubit transmon register coupled
//! through a common bus resonator.
//!
//! The crate builds the rotating-frame Hamiltonian of the circuit, smooths
//! piecewise-constant detuning controls with a Gaussian filter, propagates
//! the Schrödinger equation, and maximises a leakage-projected gate
//! fidelity with an exact gradient and a projected quasi-Newton ascent.

pub mod cli;
pub mod config;
pub mod device;
pub mod error;
pub mod experiments;
pub mod io;
pub mod objective;
pub mod operators;
pub mod optimizer;
pub mod problem;
pub mod propagation;
pub mod pulse;
pub mod sectors;

pub use error::{Error, Result};
