#![allow(dead_code)]

use jitter_transfer::oscillator::OscillatorParams;
use jitter_transfer::simulator::{SimulationConfig, SimulationMode};

/// Mean periods in seconds.
pub const PERIODS: [f64; 3] = [1e-3, 0.724e-3, 0.652e-3];
/// Accumulated volatilities over `PERIODS[0]`.
pub const SIGMA_T0: [f64; 3] = [1e-3, 2e-3, 3e-3];
/// Composed jitters `sigma'_01(T0), sigma'_02(T0), sigma'_12(T1)`.
pub const EXPECTED_COMPOSED: [f64; 3] = [2.43e-3, 3.36e-3, 3.17e-3];
pub const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

pub fn frequencies() -> [f64; 3] {
    PERIODS.map(|t| 1.0 / t)
}

/// Phase-rate volatilities `sigma_i = sigma_i(T0) / sqrt(T0)`.
pub fn rates() -> [f64; 3] {
    SIGMA_T0.map(|s| s / PERIODS[0].sqrt())
}

pub fn oscillators() -> Vec<OscillatorParams> {
    frequencies()
        .iter()
        .zip(rates())
        .map(|(&f, s)| OscillatorParams::new(0.0, f, s, 0.5).unwrap())
        .collect()
}

pub fn topology(n_bits: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        oscillators: oscillators(),
        pairs: PAIRS.to_vec(),
        n_bits,
        mode: SimulationMode::ExactIg,
        seed,
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}
