//! Ring-oscillator phase-noise models, elementary TRNG simulation, emulated
//! differential jitter measurement and recovery of individual oscillator
//! volatilities from pairwise measurements.

pub mod artifacts;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod measurement;
pub mod oscillator;
pub mod quad;
pub mod recovery;
pub mod simulator;
pub mod special;
pub mod transfer;

pub use error::{Error, Result};
