//! Phase estimation with Gaussian probes under phase diffusion.
//!
//! The crate builds truncated Fock representations of displaced squeezed
//! probes, applies the phase-diffusion channel, and evaluates the quantum
//! Fisher information together with the Fisher information and variance of
//! homodyne detection.

pub mod channel;
pub mod error;
pub mod fock;
pub mod homodyne;
pub mod numeric;
pub mod qfi;
pub mod sweep;

pub use error::{Error, Result};
