//! Jittered ring-oscillator model.
//!
//! An oscillator's unwrapped phase is `phi + f t + xi_t`, with `xi` a Wiener
//! process of volatility `sigma` (units `s^-1/2`). Its output is the
//! 1-periodic square wave of that phase, high while the wrapped phase is
//! below the duty cycle. Phases stay unwrapped in this layer; wrapping is
//! done only when bits are extracted.

use serde::{Deserialize, Serialize};

use crate::distributions::InverseGaussianParams;
use crate::error::{ensure_non_negative, ensure_positive, invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOscillator")]
pub struct OscillatorParams {
    initial_phase: f64,
    frequency: f64,
    volatility: f64,
    duty_cycle: f64,
}

#[derive(Deserialize)]
struct RawOscillator {
    initial_phase: f64,
    frequency: f64,
    volatility: f64,
    duty_cycle: f64,
}

impl TryFrom<RawOscillator> for OscillatorParams {
    type Error = Error;
    fn try_from(raw: RawOscillator) -> Result<Self> {
        Self::new(raw.initial_phase, raw.frequency, raw.volatility, raw.duty_cycle)
    }
}

impl OscillatorParams {
    pub fn new(initial_phase: f64, frequency: f64, volatility: f64, duty_cycle: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&initial_phase) {
            return Err(invalid("initial_phase", format!("must lie in [0, 1), got {initial_phase}")));
        }
        ensure_positive("frequency", frequency)?;
        ensure_non_negative("volatility", volatility)?;
        if !(duty_cycle > 0.0 && duty_cycle < 1.0) {
            return Err(invalid("duty_cycle", format!("must lie in (0, 1), got {duty_cycle}")));
        }
        Ok(Self {
            initial_phase,
            frequency,
            volatility,
            duty_cycle,
        })
    }

    /// Oscillator with zero initial phase and a 50% duty cycle.
    pub fn with_period(period: f64, volatility: f64) -> Result<Self> {
        ensure_positive("period", period)?;
        Self::new(0.0, 1.0 / period, volatility, 0.5)
    }

    pub fn initial_phase(&self) -> f64 {
        self.initial_phase
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    pub fn volatility(&self) -> f64 {
        self.volatility
    }

    pub fn duty_cycle(&self) -> f64 {
        self.duty_cycle
    }

    pub fn is_jitter_free(&self) -> bool {
        self.volatility == 0.0
    }

    pub fn with_volatility(mut self, volatility: f64) -> Result<Self> {
        ensure_non_negative("volatility", volatility)?;
        self.volatility = volatility;
        Ok(self)
    }

    pub fn with_initial_phase(self, initial_phase: f64) -> Result<Self> {
        Self::new(initial_phase, self.frequency, self.volatility, self.duty_cycle)
    }

    pub fn with_duty_cycle(self, duty_cycle: f64) -> Result<Self> {
        Self::new(self.initial_phase, self.frequency, self.volatility, duty_cycle)
    }

    /// Square-wave output at an (unwrapped) phase.
    pub fn output_at_phase(&self, phase: f64) -> u8 {
        u8::from(phase.rem_euclid(1.0) < self.duty_cycle)
    }
}

/// Law of a clock-edge time: inverse Gaussian, or a fixed instant when the
/// oscillator carries no jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeTime {
    Random(InverseGaussianParams),
    Deterministic(f64),
}

impl EdgeTime {
    pub fn mean(&self) -> f64 {
        match self {
            EdgeTime::Random(p) => p.mean(),
            EdgeTime::Deterministic(t) => *t,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            EdgeTime::Random(p) => p.variance(),
            EdgeTime::Deterministic(_) => 0.0,
        }
    }
}

/// Time of the `k`-th rising edge: the first passage of `f t + xi_t` through
/// `k - phi`, i.e. `IG((k - phi)/f, (k - phi)^2 / sigma^2)`.
pub fn edge_time_law(osc: &OscillatorParams, k: u64) -> Result<EdgeTime> {
    let distance = k as f64 - osc.initial_phase;
    if !(distance > 0.0) {
        return Err(invalid("k", format!("edge {k} must lie beyond the initial phase {}", osc.initial_phase)));
    }
    let mean = distance / osc.frequency;
    if osc.is_jitter_free() {
        return Ok(EdgeTime::Deterministic(mean));
    }
    let shape = distance * distance / (osc.volatility * osc.volatility);
    Ok(EdgeTime::Random(InverseGaussianParams::new(mean, shape)?))
}

/// Duration of one clock cycle, `IG(1/f, 1/sigma^2)`, the same for every cycle.
pub fn clock_cycle_law(osc: &OscillatorParams) -> Result<EdgeTime> {
    if osc.is_jitter_free() {
        return Ok(EdgeTime::Deterministic(osc.period()));
    }
    Ok(EdgeTime::Random(InverseGaussianParams::new(
        osc.period(),
        1.0 / (osc.volatility * osc.volatility),
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of the sampled oscillator's phase at the `k`-th rising
/// edge of the sampler.
pub fn sampled_phase_moments(
    sampler: &OscillatorParams,
    sampled: &OscillatorParams,
    k: u64,
) -> Result<PhaseMoments> {
    let distance = k as f64 - sampler.initial_phase;
    if !(distance > 0.0) {
        return Err(invalid("k", format!("edge {k} must lie beyond the initial phase")));
    }
    let (f0, s0) = (sampler.frequency, sampler.volatility);
    let (f1, s1) = (sampled.frequency, sampled.volatility);
    let mean = sampled.initial_phase + distance * f1 / f0;
    let variance = f1 * f1 / f0.powi(3) * distance * s0 * s0 + distance * s1 * s1 / f0;
    Ok(PhaseMoments { mean, variance })
}

/// `Var[T] / E[T]^2` of a clock cycle, which equals `sigma^2 / f`.
pub fn jitter_ratio(cycle_mean: f64, cycle_variance: f64) -> Result<f64> {
    ensure_positive("cycle_mean", cycle_mean)?;
    ensure_non_negative("cycle_variance", cycle_variance)?;
    Ok(cycle_variance / (cycle_mean * cycle_mean))
}

/// Jitter accumulated over a reference period: `sqrt(T_ref sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccumulatedVolatility {
    pub value: f64,
    pub reference_period: f64,
}

impl AccumulatedVolatility {
    /// Builds from an already-accumulated value, e.g. a measurement output.
    pub fn new(value: f64, reference_period: f64) -> Result<Self> {
        ensure_non_negative("value", value)?;
        ensure_positive("reference_period", reference_period)?;
        Ok(Self {
            value,
            reference_period,
        })
    }

    pub fn squared(&self) -> f64 {
        self.value * self.value
    }

    /// Re-expresses the same volatility accumulated over another period.
    pub fn rescaled(&self, reference_period: f64) -> Result<Self> {
        accumulate(de_accumulate(self), reference_period)
    }
}

pub fn accumulate(sigma_sq: f64, reference_period: f64) -> Result<AccumulatedVolatility> {
    ensure_non_negative("sigma_sq", sigma_sq)?;
    ensure_positive("reference_period", reference_period)?;
    Ok(AccumulatedVolatility {
        value: (reference_period * sigma_sq).sqrt(),
        reference_period,
    })
}

/// Recovers `sigma^2` (units `1/s`) from an accumulated volatility.
pub fn de_accumulate(acc: &AccumulatedVolatility) -> f64 {
    acc.value * acc.value / acc.reference_period
}

#[cfg(test)]
mod tests {
    use super::*;

    fn osc(phase: f64, f: f64, sigma: f64) -> OscillatorParams {
        OscillatorParams::new(phase, f, sigma, 0.5).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(OscillatorParams::new(1.0, 1.0, 0.0, 0.5).is_err());
        assert!(OscillatorParams::new(-0.1, 1.0, 0.0, 0.5).is_err());
        assert!(OscillatorParams::new(0.0, 0.0, 0.0, 0.5).is_err());
        assert!(OscillatorParams::new(0.0, 1.0, -1.0, 0.5).is_err());
        assert!(OscillatorParams::new(0.0, 1.0, 0.1, 1.0).is_err());
        assert!(OscillatorParams::new(0.0, 1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn first_edge_law() {
        let law = edge_time_law(&osc(0.0, 1.0, 0.1), 1).unwrap();
        let EdgeTime::Random(p) = law else {
            panic!("expected a random edge time")
        };
        assert!((p.mean_mu() - 1.0).abs() < 1e-15);
        assert!((p.shape_lambda() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn later_edges_scale_with_distance() {
        let o = osc(0.25, 4.0, 0.2);
        let law = edge_time_law(&o, 3).unwrap();
        let EdgeTime::Random(p) = law else { panic!() };
        assert!((p.mean_mu() - 2.75 / 4.0).abs() < 1e-15);
        assert!((p.shape_lambda() - 2.75 * 2.75 / 0.04).abs() < 1e-9);
        // variance of the k-th edge is linear in the distance to it
        let var = p.variance();
        assert!((var - 2.75 * 0.04 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn edge_before_initial_phase_is_rejected() {
        let o = osc(0.0, 1.0, 0.1);
        assert!(edge_time_law(&o, 0).is_err());
    }

    #[test]
    fn jitter_free_edges_are_deterministic() {
        let o = osc(0.5, 2.0, 0.0);
        assert_eq!(edge_time_law(&o, 3).unwrap(), EdgeTime::Deterministic(1.25));
        assert_eq!(clock_cycle_law(&o).unwrap(), EdgeTime::Deterministic(0.5));
    }

    #[test]
    fn cycle_law_is_difference_of_consecutive_edges() {
        let o = osc(0.3, 3.0, 0.05);
        let cycle = clock_cycle_law(&o).unwrap();
        for k in 1..6 {
            let a = edge_time_law(&o, k).unwrap();
            let b = edge_time_law(&o, k + 1).unwrap();
            // independent increments: moments add
            assert!((b.mean() - a.mean() - cycle.mean()).abs() < 1e-15);
            assert!((b.variance() - a.variance() - cycle.variance()).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_phase_without_jitter() {
        let m = sampled_phase_moments(&osc(0.0, 5.0, 0.0), &osc(0.1, 7.0, 0.0), 3).unwrap();
        assert!((m.mean - (0.1 + 3.0 * 7.0 / 5.0)).abs() < 1e-15);
        assert_eq!(m.variance, 0.0);
    }

    #[test]
    fn sampled_phase_for_first_bank_pair() {
        // O0 sampling O1: periods 1 ms and 0.724 ms, accumulated jitters per
        // T0 of 1e-3 and 2e-3
        let t0 = 1e-3;
        let sampler = OscillatorParams::with_period(t0, (1e-6_f64 / t0).sqrt()).unwrap();
        let sampled = OscillatorParams::with_period(0.724e-3, (4e-6_f64 / t0).sqrt()).unwrap();
        let m = sampled_phase_moments(&sampler, &sampled, 1).unwrap();
        assert!((m.mean - 1.0 / 0.724).abs() < 1e-12);
        let expected = (1.0 / 0.724_f64).powi(2) * 1e-6 + 4e-6;
        assert!((m.variance - expected).abs() / expected < 1e-12);
        assert!((m.variance.sqrt() - 2.43e-3).abs() < 0.005e-3);
    }

    #[test]
    fn sampled_phase_variance_is_linear_in_edge_index() {
        let (a, b) = (osc(0.0, 1.3, 0.02), osc(0.4, 0.9, 0.03));
        for k in [1, 2, 5, 40] {
            let v1 = sampled_phase_moments(&a, &b, k).unwrap().variance;
            let v2 = sampled_phase_moments(&a, &b, 2 * k).unwrap().variance;
            assert!((v2 - 2.0 * v1).abs() <= 1e-15 * v2);
        }
    }

    #[test]
    fn jitter_ratio_cases() {
        assert_eq!(jitter_ratio(3.0, 0.0).unwrap(), 0.0);
        assert!(jitter_ratio(0.0, 1.0).is_err());
        let (f, sigma) = (50e6_f64, 2.0_f64);
        let law = clock_cycle_law(&osc(0.0, f, sigma)).unwrap();
        let r = jitter_ratio(law.mean(), law.variance()).unwrap();
        assert!((r - sigma * sigma / f).abs() / r < 1e-12);
    }

    #[test]
    fn accumulate_reference_value() {
        let t0 = 1e-3;
        let acc = accumulate(4e-6 / t0, t0).unwrap();
        assert!((acc.value - 2.00e-3).abs() < 1e-15);
        assert_eq!(accumulate(0.0, t0).unwrap().value, 0.0);
        assert!(accumulate(1.0, 0.0).is_err());
        assert!(accumulate(1.0, -1.0).is_err());
    }

    #[test]
    fn rescale_between_reference_periods() {
        let acc = accumulate(9e-3, 1e-3).unwrap();
        let over_t1 = acc.rescaled(0.724e-3).unwrap();
        assert!((over_t1.squared() - 0.724 * acc.squared()).abs() < 1e-18);
    }

    #[test]
    fn output_wraps_phase() {
        let o = osc(0.0, 1.0, 0.0);
        assert_eq!(o.output_at_phase(0.0), 1);
        assert_eq!(o.output_at_phase(7.49), 1);
        assert_eq!(o.output_at_phase(7.5), 0);
        assert_eq!(o.output_at_phase(-0.2), 0);
    }
}
