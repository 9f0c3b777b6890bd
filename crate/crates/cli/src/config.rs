//! Run configuration: oscillator bank, pair topology and simulation knobs.
//!
//! Every volatility carries an explicit `units` tag so that phase-rate,
//! accumulated and period-variance figures can never be confused.

use std::path::Path;

use jitter_transfer::oscillator::OscillatorParams;
use jitter_transfer::simulator::{SimulationConfig, SimulationMode};
use jitter_transfer::transfer::phase_from_period;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub oscillators: Vec<OscillatorSpec>,
    /// `[sampler, sampled]` index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub n_bits: usize,
    #[serde(default = "default_mode")]
    pub mode: SimulationMode,
    /// Ignored by `simulate`, which takes `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<OutputPaths>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_hz: Option<f64>,
    pub volatility: Volatility,
    #[serde(default = "default_duty")]
    pub duty_cycle: f64,
    #[serde(default)]
    pub initial_phase: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_elements: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "units", rename_all = "snake_case", deny_unknown_fields)]
pub enum Volatility {
    /// `sigma` in `s^-1/2`.
    PhaseRate { value: f64 },
    /// `sqrt(T_ref sigma^2)`, dimensionless, over a period given in seconds
    /// or as the mean period of another oscillator.
    Accumulated {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference_period_s: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference_oscillator: Option<usize>,
    },
    /// Variance of one period in `s^2`.
    PeriodVarianceS2 { value: f64 },
}

fn default_mode() -> SimulationMode {
    SimulationMode::ExactIg
}

fn default_duty() -> f64 {
    0.5
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.periods()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Mean periods in seconds; exactly one of period or frequency per
    /// oscillator.
    pub fn periods(&self) -> Result<Vec<f64>, CliError> {
        self.oscillators
            .iter()
            .enumerate()
            .map(|(i, o)| match (o.period_s, o.frequency_hz) {
                (Some(t), None) if t > 0.0 && t.is_finite() => Ok(t),
                (None, Some(f)) if f > 0.0 && f.is_finite() => Ok(1.0 / f),
                (Some(_), Some(_)) => Err(CliError::Config(format!(
                    "at `oscillators[{i}]`: give exactly one of `period_s` and `frequency_hz`, not both"
                ))),
                (None, None) => Err(CliError::Config(format!(
                    "at `oscillators[{i}]`: one of `period_s` or `frequency_hz` is required"
                ))),
                _ => Err(CliError::Config(format!(
                    "at `oscillators[{i}]`: period or frequency must be finite and positive"
                ))),
            })
            .collect()
    }

    /// Phase-rate volatilities `sigma` in `s^-1/2`.
    pub fn volatilities(&self) -> Result<Vec<f64>, CliError> {
        let periods = self.periods()?;
        self.oscillators
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let at = |field: &str, msg: String| CliError::Config(format!("at `oscillators[{i}].volatility.{field}`: {msg}"));
                let check = |v: f64| {
                    if v >= 0.0 && v.is_finite() {
                        Ok(v)
                    } else {
                        Err(at("value", format!("must be finite and >= 0, got {v}")))
                    }
                };
                match &o.volatility {
                    Volatility::PhaseRate { value } => check(*value),
                    Volatility::PeriodVarianceS2 { value } => Ok(phase_from_period(check(*value)?, 1.0 / periods[i]).sqrt()),
                    Volatility::Accumulated {
                        value,
                        reference_period_s,
                        reference_oscillator,
                    } => {
                        let value = check(*value)?;
                        let t_ref = match (reference_period_s, reference_oscillator) {
                            (Some(t), None) if *t > 0.0 && t.is_finite() => *t,
                            (None, Some(k)) => *periods.get(*k).ok_or_else(|| {
                                at("reference_oscillator", format!("no oscillator {k} in a bank of {}", periods.len()))
                            })?,
                            (Some(t), None) => return Err(at("reference_period_s", format!("must be finite and > 0, got {t}"))),
                            _ => {
                                return Err(at(
                                    "reference_period_s",
                                    "accumulated volatility needs exactly one of `reference_period_s` or `reference_oscillator`".into(),
                                ))
                            }
                        };
                        Ok(value / t_ref.sqrt())
                    }
                }
            })
            .collect()
    }

    pub fn simulation_config(&self, seed: u64) -> Result<SimulationConfig, CliError> {
        let periods = self.periods()?;
        let sigmas = self.volatilities()?;
        let oscillators = self
            .oscillators
            .iter()
            .zip(periods.iter().zip(&sigmas))
            .enumerate()
            .map(|(i, (o, (&t, &s)))| {
                OscillatorParams::new(o.initial_phase, 1.0 / t, s, o.duty_cycle)
                    .map_err(|e| CliError::Config(format!("at `oscillators[{i}]`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = SimulationConfig {
            oscillators,
            pairs: self.pairs.clone(),
            n_bits: self.n_bits,
            mode: self.mode,
            seed,
        };
        cfg.validate().map_err(|e| CliError::Config(format!("at `pairs`: {e}")))?;
        Ok(cfg)
    }

    /// Configured `f_j / f_i` of a pair.
    pub fn nominal_ratio(&self, pair: (usize, usize)) -> Result<f64, CliError> {
        let periods = self.periods()?;
        Ok(periods[pair.0] / periods[pair.1])
    }

    pub fn delay_elements(&self, pair: (usize, usize)) -> Option<(u32, u32)> {
        Some((self.oscillators[pair.0].delay_elements?, self.oscillators[pair.1].delay_elements?))
    }
}
