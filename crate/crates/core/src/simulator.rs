//! Elementary oscillator-based TRNG simulation: one oscillator's rising
//! edges sample another oscillator's square wave through a D flip-flop.
//!
//! Each step draws the sampler's clock-cycle duration, advances the sampled
//! oscillator's phase by a normal increment with mean `f1 P` and variance
//! `sigma1^2 P`, and emits `1` while the wrapped phase is below the duty
//! cycle. The cycle duration is drawn from `IG(1/f0, 1/sigma0^2)` in
//! [`SimulationMode::ExactIg`], or from its moment-matched normal
//! `N(1/f0, sigma0^2 / f0^3)` in [`SimulationMode::NormalApprox`].

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{ig_sample, InverseGaussianParams};
use crate::error::{invalid, Error, Result};
use crate::oscillator::OscillatorParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    ExactIg,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub oscillators: Vec<OscillatorParams>,
    /// `(sampler_index, sampled_index)`
    pub pairs: Vec<(usize, usize)>,
    pub n_bits: usize,
    pub mode: SimulationMode,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bits == 0 {
            return Err(invalid("n_bits", "must be at least 1"));
        }
        if self.pairs.is_empty() {
            return Err(invalid("pairs", "at least one pair is required"));
        }
        let mut seen = HashSet::new();
        for &(i, j) in &self.pairs {
            if i >= self.oscillators.len() || j >= self.oscillators.len() {
                return Err(invalid(
                    "pairs",
                    format!("pair ({i}, {j}) refers to a missing oscillator (have {})", self.oscillators.len()),
                ));
            }
            if i == j {
                return Err(invalid("pairs", format!("oscillator {i} cannot sample itself")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::DuplicatePair(i, j));
            }
        }
        Ok(())
    }
}

/// Output of one simulated sampler/sampled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub pair: (usize, usize),
    pub mode: SimulationMode,
    pub seed: u64,
    /// Mean period of the sampling oscillator, the reference period of the
    /// per-step jitter.
    pub sampler_period: f64,
    pub duty_cycle: f64,
    /// Unwrapped phase of the sampled oscillator at each sampling edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_phases: Option<Vec<f64>>,
}

impl BitStream {
    /// A stream read back from storage, without ground truth.
    pub fn from_bits(bits: Vec<u8>, pair: (usize, usize), sampler_period: f64, duty_cycle: f64) -> Self {
        Self {
            bits,
            pair,
            mode: SimulationMode::ExactIg,
            seed: 0,
            sampler_period,
            duty_cycle,
            ground_truth_phases: None,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// Random stream for pair number `stream` of a run seeded with `seed`.
pub fn pair_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `n` bits of `sampler` sampling `sampled`; uses stream 0 of `seed`.
pub fn simulate_pair(
    sampler: &OscillatorParams,
    sampled: &OscillatorParams,
    n: usize,
    mode: SimulationMode,
    seed: u64,
) -> Result<BitStream> {
    let mut rng = pair_rng(seed, 0);
    let mut stream = simulate_pair_with_rng(sampler, sampled, n, mode, &mut rng)?;
    stream.seed = seed;
    Ok(stream)
}

enum CycleSampler {
    Fixed(f64),
    InverseGaussian(InverseGaussianParams),
    Normal { mean: f64, std: f64 },
}

impl CycleSampler {
    /// Time for the sampler's phase to travel `distance` cycles.
    fn new(sampler: &OscillatorParams, mode: SimulationMode, distance: f64) -> Result<Self> {
        let (f0, s0) = (sampler.frequency(), sampler.volatility());
        if sampler.is_jitter_free() {
            return Ok(CycleSampler::Fixed(distance / f0));
        }
        Ok(match mode {
            SimulationMode::ExactIg => {
                CycleSampler::InverseGaussian(InverseGaussianParams::new(distance / f0, distance * distance / (s0 * s0))?)
            }
            SimulationMode::NormalApprox => CycleSampler::Normal {
                mean: distance / f0,
                std: s0 * distance.sqrt() / (f0 * f0.sqrt()),
            },
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            CycleSampler::Fixed(p) => *p,
            CycleSampler::InverseGaussian(p) => ig_sample(p, rng),
            CycleSampler::Normal { mean, std } => loop {
                let z: f64 = StandardNormal.sample(rng);
                let p = mean + std * z;
                // the normal approximation has a vanishing negative tail
                if p > 0.0 {
                    break p;
                }
            },
        }
    }
}

pub fn simulate_pair_with_rng(
    sampler: &OscillatorParams,
    sampled: &OscillatorParams,
    n: usize,
    mode: SimulationMode,
    rng: &mut ChaCha8Rng,
) -> Result<BitStream> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let (f0, f1, s1) = (sampler.frequency(), sampled.frequency(), sampled.volatility());
    let mut bits = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);

    if sampler.is_jitter_free() && sampled.is_jitter_free() {
        // closed form keeps rational frequency ratios exact
        for k in 1..=n {
            let phase = sampled.initial_phase() + ((k as f64 - sampler.initial_phase()) * f1) / f0;
            bits.push(sampled.output_at_phase(phase));
            phases.push(phase);
        }
    } else {
        // the first edge is reached after travelling 1 - phi0 cycles
        let first = CycleSampler::new(sampler, mode, 1.0 - sampler.initial_phase())?;
        let cycle = CycleSampler::new(sampler, mode, 1.0)?;
        let mut phase = sampled.initial_phase();
        for k in 0..n {
            let duration = if k == 0 { first.draw(rng) } else { cycle.draw(rng) };
            let z: f64 = StandardNormal.sample(rng);
            phase += f1 * duration + s1 * duration.sqrt() * z;
            bits.push(sampled.output_at_phase(phase));
            phases.push(phase);
        }
    }

    Ok(BitStream {
        bits,
        pair: (0, 1),
        mode,
        seed: 0,
        sampler_period: sampler.period(),
        duty_cycle: sampled.duty_cycle(),
        ground_truth_phases: Some(phases),
    })
}

/// One stream per configured pair, pair `p` drawing from stream `p` of the
/// master seed.
pub fn simulate_topology(cfg: &SimulationConfig) -> Result<Vec<BitStream>> {
    cfg.validate()?;
    cfg.pairs
        .iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            let mut rng = pair_rng(cfg.seed, p as u64);
            let mut stream =
                simulate_pair_with_rng(&cfg.oscillators[i], &cfg.oscillators[j], cfg.n_bits, cfg.mode, &mut rng)?;
            stream.pair = (i, j);
            stream.seed = cfg.seed;
            Ok(stream)
        })
        .collect()
}
