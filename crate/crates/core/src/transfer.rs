//! Jitter transfer: a jittered sampler observing a jittered oscillator is
//! equivalent, for the sampled phase, to a jitter-free sampler observing an
//! oscillator that carries the composed volatility
//! `sigma'^2 = (f1/f0)^2 sigma0^2 + sigma1^2`.
//!
//! The same law is expressed in three unit conventions: phase-noise
//! volatility (`s^-1/2`), period jitter (variance of one period, `s^2`) and
//! time jitter (`s^1/2`). Values carry their convention so they never mix.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Result};

/// Above this `sigma0^2 / f0` the normal approximation behind the transfer
/// visibly degrades.
pub const VALIDITY_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterConvention {
    Phase,
    Period,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferredJitter {
    pub sigma_prime_sq: f64,
    pub convention: JitterConvention,
    pub pair: (usize, usize),
    /// `sigma0^2 / f0` of the sampler, in phase-noise units.
    pub validity_ratio: f64,
    /// Set when `validity_ratio` exceeds [`VALIDITY_THRESHOLD`].
    pub approximation_warning: bool,
}

impl TransferredJitter {
    fn new(sigma_prime_sq: f64, convention: JitterConvention, validity_ratio: f64) -> Self {
        Self {
            sigma_prime_sq,
            convention,
            pair: (0, 1),
            validity_ratio,
            approximation_warning: validity_ratio > VALIDITY_THRESHOLD,
        }
    }

    pub fn sigma_prime(&self) -> f64 {
        self.sigma_prime_sq.sqrt()
    }

    pub fn with_pair(mut self, sampler: usize, sampled: usize) -> Self {
        self.pair = (sampler, sampled);
        self
    }
}

/// Composed phase-noise volatility of sampler `(f0, sigma0)` and sampled
/// oscillator `(f1, sigma1)`.
pub fn transfer_phase(f0: f64, sigma0: f64, f1: f64, sigma1: f64) -> Result<TransferredJitter> {
    ensure_positive("f0", f0)?;
    ensure_positive("f1", f1)?;
    ensure_non_negative("sigma0", sigma0)?;
    ensure_non_negative("sigma1", sigma1)?;
    let ratio = f1 / f0;
    let sq = ratio * ratio * sigma0 * sigma0 + sigma1 * sigma1;
    Ok(TransferredJitter::new(sq, JitterConvention::Phase, sigma0 * sigma0 / f0))
}

/// Composed period jitter `(f0/f1) p0 + p1`, where `p` is the variance of
/// one period of each oscillator.
pub fn transfer_period(f0: f64, period_jitter0_sq: f64, f1: f64, period_jitter1_sq: f64) -> Result<TransferredJitter> {
    ensure_positive("f0", f0)?;
    ensure_positive("f1", f1)?;
    ensure_non_negative("period_jitter0_sq", period_jitter0_sq)?;
    ensure_non_negative("period_jitter1_sq", period_jitter1_sq)?;
    let sq = f0 / f1 * period_jitter0_sq + period_jitter1_sq;
    let validity = phase_from_period(period_jitter0_sq, f0) / f0;
    Ok(TransferredJitter::new(sq, JitterConvention::Period, validity))
}

/// Composed time jitter `sqrt(t0^2 + t1^2)`. Frequencies do not enter, so
/// no validity ratio can be formed from the inputs alone; it is reported as 0.
pub fn transfer_time(sigma0_time: f64, sigma1_time: f64) -> Result<TransferredJitter> {
    ensure_non_negative("sigma0_time", sigma0_time)?;
    ensure_non_negative("sigma1_time", sigma1_time)?;
    let sq = sigma0_time * sigma0_time + sigma1_time * sigma1_time;
    Ok(TransferredJitter::new(sq, JitterConvention::Time, 0.0))
}

/// Phase-noise `sigma^2` of an oscillator whose period variance is `p`:
/// `sigma^2 = p f^3`.
pub fn phase_from_period(period_jitter_sq: f64, frequency: f64) -> f64 {
    period_jitter_sq * frequency.powi(3)
}

pub fn period_from_phase(sigma_sq: f64, frequency: f64) -> f64 {
    sigma_sq / frequency.powi(3)
}

/// Phase-noise volatility of a time-jitter volatility: `sigma = f sigma_t`.
pub fn phase_from_time(sigma_time: f64, frequency: f64) -> f64 {
    frequency * sigma_time
}

pub fn time_from_phase(sigma: f64, frequency: f64) -> f64 {
    sigma / frequency
}

/// Phase variance gained by an oscillator of frequency `f_osc` during one
/// cycle of a jitter-free clock at `f_clock`, given the oscillator's period
/// variance: `Q = sigma^2 / f_clock = p f_osc^3 / f_clock`.
pub fn phase_increment_per_clock_cycle(period_jitter_sq: f64, f_osc: f64, f_clock: f64) -> Result<f64> {
    ensure_non_negative("period_jitter_sq", period_jitter_sq)?;
    ensure_positive("f_osc", f_osc)?;
    ensure_positive("f_clock", f_clock)?;
    Ok(phase_from_period(period_jitter_sq, f_osc) / f_clock)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T0: f64 = 1e-3;
    const T1: f64 = 0.724e-3;
    const T2: f64 = 0.652e-3;

    fn sigma_from_accumulated(acc: f64) -> f64 {
        (acc * acc / T0).sqrt()
    }

    #[test]
    fn first_bank_pair() {
        let t = transfer_phase(1.0 / T0, sigma_from_accumulated(1e-3), 1.0 / T1, sigma_from_accumulated(2e-3)).unwrap();
        let acc = (T0 * t.sigma_prime_sq).sqrt();
        assert!((acc - 2.43e-3).abs() < 0.01e-3, "{acc:e}");
        assert!(!t.approximation_warning);
    }

    #[test]
    fn second_sampler_pair_accumulated_over_its_own_period() {
        let t = transfer_phase(1.0 / T1, sigma_from_accumulated(2e-3), 1.0 / T2, sigma_from_accumulated(3e-3)).unwrap();
        let acc = (T1 * t.sigma_prime_sq).sqrt();
        assert!((acc - 3.17e-3).abs() < 0.01e-3, "{acc:e}");
    }

    #[test]
    fn jitter_free_sampler_passes_sampled_volatility() {
        let t = transfer_phase(3.0, 0.0, 5.0, 0.2).unwrap();
        assert!((t.sigma_prime() - 0.2).abs() < 1e-15);
        assert_eq!(t.validity_ratio, 0.0);
    }

    #[test]
    fn warning_flag_above_threshold() {
        assert!(transfer_phase(1.0, 0.11, 1.0, 0.1).unwrap().approximation_warning);
        assert!(!transfer_phase(1.0, 0.09, 1.0, 0.1).unwrap().approximation_warning);
    }

    #[test]
    fn period_transfer_equal_frequencies_adds_variances() {
        let t = transfer_period(2.0, 0.3, 2.0, 0.5).unwrap();
        assert!((t.sigma_prime_sq - 0.8).abs() < 1e-15);
        assert_eq!(t.convention, JitterConvention::Period);
    }

    #[test]
    fn period_transfer_agrees_with_phase_transfer() {
        let (f0, f1, p0, p1) = (65.5e6_f64, 58.0e6_f64, 2.1e-24_f64, 3.4e-24_f64);
        let direct = transfer_period(f0, p0, f1, p1).unwrap().sigma_prime_sq;
        let via_phase = transfer_phase(
            f0,
            phase_from_period(p0, f0).sqrt(),
            f1,
            phase_from_period(p1, f1).sqrt(),
        )
        .unwrap();
        let back = period_from_phase(via_phase.sigma_prime_sq, f1);
        assert!((direct - back).abs() / direct < 1e-12);
    }

    #[test]
    fn time_transfer_is_pythagorean() {
        assert!((transfer_time(3.0, 4.0).unwrap().sigma_prime() - 5.0).abs() < 1e-15);
        assert!((transfer_time(0.0, 7.5).unwrap().sigma_prime() - 7.5).abs() < 1e-15);
    }

    #[test]
    fn time_transfer_agrees_with_phase_transfer() {
        let (f0, f1, t0, t1) = (5.0_f64, 7.0_f64, 0.013_f64, 0.021_f64);
        let via_phase = transfer_phase(f0, phase_from_time(t0, f0), f1, phase_from_time(t1, f1)).unwrap();
        let back = time_from_phase(via_phase.sigma_prime(), f1);
        let direct = transfer_time(t0, t1).unwrap().sigma_prime();
        assert!((direct - back).abs() / direct < 1e-12);
    }

    #[test]
    fn worked_period_jitter_example() {
        // 0.094 ns^2 period variance at a 33.4 ns mean period, against a
        // 50 MHz jitter-free clock
        let q = phase_increment_per_clock_cycle(0.094e-18, 1.0 / 33.4e-9, 50e6).unwrap();
        // direct arithmetic: 0.094 / (33.4^3 * 50e6 * 1e-9)
        let expected = 0.094 / (33.4_f64.powi(3) * 50e6 * 1e-9);
        assert!((q - expected).abs() / expected < 1e-12);
        assert!((1.0 / q - 19_819.0).abs() < 1.0);
    }
}
