//! Recovery of individual oscillator volatilities from differential
//! measurements.
//!
//! A measurement on pair `(i, j)` gives the composed volatility
//! `(f_j/f_i)^2 sigma_i^2 + sigma_j^2`. Measuring the pairs
//! `(0,1), (0,2), (1,2), (0,3), ..., (0,n)` yields a square system `M x = b`
//! in the rates `x_i = sigma_i^2`, solved here with its closed-form inverse.
//!
//! Accumulated inputs (`sigma'_ij(T_i)^2 = T_i sigma'^2_ij`) and outputs
//! (`sigma_i^2(T_0) = T_0 sigma_i^2`) are the canonical representation: the
//! accumulated system is `A = D M` with `D = diag(T_i / T_0)` over the
//! sampler of each row, so `x_acc = M^-1 D^-1 b_acc`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::measurement::MeasurementRecord;

/// Condition numbers above this flag the solution as ill-conditioned.
pub const KAPPA_THRESHOLD: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioSource {
    Measured,
    Configured,
}

/// Frequency ratios `f_i / f_0` for oscillators `0..=n`; the first is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRatios")]
pub struct FrequencyRatios {
    ratios: Vec<f64>,
    source: RatioSource,
}

#[derive(Deserialize)]
struct RawRatios {
    ratios: Vec<f64>,
    source: RatioSource,
}

impl TryFrom<RawRatios> for FrequencyRatios {
    type Error = Error;

    fn try_from(raw: RawRatios) -> Result<Self> {
        FrequencyRatios::new(raw.ratios, raw.source)
    }
}

impl FrequencyRatios {
    pub fn new(ratios: Vec<f64>, source: RatioSource) -> Result<Self> {
        if ratios.len() < 2 {
            return Err(invalid("ratios", "need at least two oscillators"));
        }
        for &r in &ratios {
            ensure_positive("ratios", r)?;
        }
        if (ratios[0] - 1.0).abs() > 1e-12 {
            return Err(invalid("ratios", format!("ratio of oscillator 0 to itself must be 1, got {}", ratios[0])));
        }
        Ok(Self { ratios, source })
    }

    pub fn from_frequencies(frequencies: &[f64], source: RatioSource) -> Result<Self> {
        let f0 = *frequencies.first().ok_or_else(|| invalid("frequencies", "empty"))?;
        ensure_positive("frequencies", f0)?;
        Self::new(frequencies.iter().map(|f| f / f0).collect(), source)
    }

    pub fn from_periods(periods: &[f64], source: RatioSource) -> Result<Self> {
        let t0 = *periods.first().ok_or_else(|| invalid("periods", "empty"))?;
        ensure_positive("periods", t0)?;
        for &t in periods {
            ensure_positive("periods", t)?;
        }
        Self::new(periods.iter().map(|t| t0 / t).collect(), source)
    }

    /// `f_i / f_0`
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn source(&self) -> RatioSource {
        self.source
    }

    /// Index of the last oscillator.
    pub fn n(&self) -> usize {
        self.ratios.len() - 1
    }

    /// `T_i / T_0`
    pub fn period_ratio(&self, i: usize) -> f64 {
        1.0 / self.ratios[i]
    }

    /// Largest frequency ratio over all pairs.
    pub fn spread(&self) -> f64 {
        let max = self.ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.ratios.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMethod {
    Method1,
    Method2ThreeOsc,
    Method2General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionFlag {
    /// A recovered variance is negative: the measurements are inconsistent.
    NegativeVariance,
    /// The condition number exceeds [`KAPPA_THRESHOLD`].
    IllConditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySolution {
    /// `sigma_i^2(T_0) = T_0 sigma_i^2`; kept signed so inconsistencies show.
    #[serde(rename = "sigma_sq_T0")]
    pub sigma_sq_accumulated: Vec<f64>,
    /// `T_0`, the sampler period of oscillator 0.
    #[serde(rename = "T0")]
    pub reference_period: f64,
    #[serde(rename = "kappa_inf")]
    pub condition_number_inf: f64,
    #[serde(rename = "kappa_bound")]
    pub condition_bound: f64,
    /// `|A x - b|_inf` of the accumulated system.
    pub residual_inf: f64,
    pub method: RecoveryMethod,
    #[serde(default)]
    pub flags: Vec<SolutionFlag>,
}

impl VolatilitySolution {
    /// `sigma_i(T_0)`, NaN where the variance is negative.
    pub fn sigma_accumulated(&self) -> Vec<f64> {
        self.sigma_sq_accumulated.iter().map(|v| v.sqrt()).collect()
    }

    /// Rates `sigma_i^2` in `1/s`.
    pub fn sigma_sq_rates(&self) -> Vec<f64> {
        self.sigma_sq_accumulated.iter().map(|v| v / self.reference_period).collect()
    }

    fn with_flags(mut self) -> Self {
        if self.sigma_sq_accumulated.iter().any(|&v| v < 0.0) {
            self.flags.push(SolutionFlag::NegativeVariance);
        }
        if !(self.condition_number_inf <= KAPPA_THRESHOLD) {
            self.flags.push(SolutionFlag::IllConditioned);
        }
        self
    }
}

/// Measured pairs `(0,1), (0,2), (1,2), (0,3), ..., (0,n)`, in row order.
pub fn required_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = vec![(0, 1), (0, 2), (1, 2)];
    pairs.extend((3..=n).map(|i| (0, i)));
    pairs
}

fn ensure_system_size(ratios: &FrequencyRatios) -> Result<()> {
    if ratios.n() < 2 {
        return Err(invalid("ratios", "the system needs at least three oscillators"));
    }
    Ok(())
}

/// Rate-form system matrix: row `(i, j)` has `(f_j/f_i)^2` in column `i`
/// and 1 in column `j`.
pub fn system_matrix(ratios: &FrequencyRatios) -> Result<DMatrix<f64>> {
    ensure_system_size(ratios)?;
    let f = ratios.ratios();
    let size = f.len();
    let mut m = DMatrix::zeros(size, size);
    for (row, (i, j)) in required_pairs(ratios.n()).into_iter().enumerate() {
        m[(row, i)] = (f[j] / f[i]).powi(2);
        m[(row, j)] = 1.0;
    }
    Ok(m)
}

/// Accumulated-form matrix: each row of [`system_matrix`] scaled by
/// `T_i / T_0` of its sampler.
pub fn accumulated_system_matrix(ratios: &FrequencyRatios) -> Result<DMatrix<f64>> {
    let mut m = system_matrix(ratios)?;
    for (row, (i, _)) in required_pairs(ratios.n()).into_iter().enumerate() {
        let scale = ratios.period_ratio(i);
        m.row_mut(row).scale_mut(scale);
    }
    Ok(m)
}

/// Closed-form inverse of [`system_matrix`].
pub fn explicit_inverse(ratios: &FrequencyRatios) -> Result<DMatrix<f64>> {
    ensure_system_size(ratios)?;
    let f = ratios.ratios();
    let size = f.len();
    let (f0, f1, f2) = (f[0] * f[0], f[1] * f[1], f[2] * f[2]);
    let mut inv = DMatrix::zeros(size, size);
    let head = [
        [f0 / (2.0 * f1), f0 / (2.0 * f2), -f0 / (2.0 * f2)],
        [0.5, -f1 / (2.0 * f2), f1 / (2.0 * f2)],
        [-f2 / (2.0 * f1), 0.5, 0.5],
    ];
    for (r, row) in head.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            inv[(r, c)] = v;
        }
    }
    for i in 3..size {
        let fi = f[i] * f[i];
        inv[(i, 0)] = -fi / (2.0 * f1);
        inv[(i, 1)] = -fi / (2.0 * f2);
        inv[(i, 2)] = fi / (2.0 * f2);
        inv[(i, i)] = 1.0;
    }
    Ok(inv)
}

/// Maximal absolute row sum.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn condition_number_inf(m: &DMatrix<f64>, m_inv: &DMatrix<f64>) -> f64 {
    norm_inf(m) * norm_inf(m_inv)
}

/// `(1 + L^2)(1 + 3/2 L^2)` with `L` the largest frequency ratio.
pub fn condition_bound(ratios: &FrequencyRatios) -> f64 {
    let l2 = ratios.spread().powi(2);
    (1.0 + l2) * (1.0 + 1.5 * l2)
}

/// Solves the rate-form system for `sigma_i^2` given composed rates in
/// [`required_pairs`] order.
pub fn solve_rates(ratios: &FrequencyRatios, rhs: &[f64]) -> Result<Vec<f64>> {
    let inv = explicit_inverse(ratios)?;
    if rhs.len() != inv.nrows() {
        return Err(invalid("rhs", format!("expected {} values, got {}", inv.nrows(), rhs.len())));
    }
    let x = &inv * DMatrix::from_column_slice(rhs.len(), 1, rhs);
    Ok(x.iter().copied().collect())
}

/// Picks the record of each required pair, rejecting gaps, repeats and
/// pairs outside the system.
fn select_records<'a>(records: &'a [MeasurementRecord], pairs: &[(usize, usize)]) -> Result<Vec<&'a MeasurementRecord>> {
    let mut picked: Vec<Option<&MeasurementRecord>> = vec![None; pairs.len()];
    for rec in records {
        let slot = pairs
            .iter()
            .position(|&p| p == rec.pair)
            .ok_or_else(|| invalid("records", format!("pair {:?} is not part of the system", rec.pair)))?;
        if picked[slot].is_some() {
            return Err(Error::DuplicatePair(rec.pair.0, rec.pair.1));
        }
        picked[slot] = Some(rec);
    }
    picked
        .into_iter()
        .zip(pairs)
        .map(|(rec, &(i, j))| rec.ok_or(Error::MissingPair(i, j)))
        .collect()
}

fn solve_accumulated(records: &[MeasurementRecord], ratios: &FrequencyRatios, method: RecoveryMethod) -> Result<VolatilitySolution> {
    let pairs = required_pairs(ratios.n());
    let chosen = select_records(records, &pairs)?;
    // records of sampler 0 carry T_0 as their reference period
    let t0 = chosen[0].accumulated_sigma_prime.reference_period;
    // composed variance accumulated over each row's sampler period
    let rhs_acc: Vec<f64> = chosen
        .iter()
        .zip(&pairs)
        .map(|(rec, &(i, _))| {
            let rate = rec.accumulated_sigma_prime.squared() / rec.accumulated_sigma_prime.reference_period;
            rate * t0 * ratios.period_ratio(i)
        })
        .collect();
    let m = system_matrix(ratios)?;
    let inv = explicit_inverse(ratios)?;
    let scaled: Vec<f64> = rhs_acc
        .iter()
        .zip(&pairs)
        .map(|(b, &(i, _))| b / ratios.period_ratio(i))
        .collect();
    let x = &inv * DMatrix::from_column_slice(scaled.len(), 1, &scaled);
    let a = accumulated_system_matrix(ratios)?;
    let residual = (&a * &x - DMatrix::from_column_slice(rhs_acc.len(), 1, &rhs_acc)).amax();
    Ok(VolatilitySolution {
        sigma_sq_accumulated: x.iter().copied().collect(),
        reference_period: t0,
        condition_number_inf: condition_number_inf(&m, &inv),
        condition_bound: condition_bound(ratios),
        residual_inf: residual,
        method,
        flags: Vec::new(),
    }
    .with_flags())
}

/// Three oscillators from pairs `(0,1), (0,2), (1,2)`.
pub fn recover_method2_3osc(records: &[MeasurementRecord], ratios: &FrequencyRatios) -> Result<VolatilitySolution> {
    if ratios.n() != 2 {
        return Err(invalid("ratios", format!("expected three oscillators, got {}", ratios.n() + 1)));
    }
    solve_accumulated(records, ratios, RecoveryMethod::Method2ThreeOsc)
}

/// `n + 1` oscillators from pairs `(0,1), (0,2), (1,2), (0,3), ..., (0,n)`.
pub fn recover_method2_general(records: &[MeasurementRecord], ratios: &FrequencyRatios) -> Result<VolatilitySolution> {
    solve_accumulated(records, ratios, RecoveryMethod::Method2General)
}

/// Single-pair recovery assuming `sigma_i^2 f_i` is the same for all
/// oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method1Estimate {
    pub oscillator: usize,
    /// `sigma_i^2(T_0)`
    pub sigma_sq_t0: f64,
    /// `sigma_0^2(T_0)` implied by the hypothesis.
    pub sigma0_sq_t0: f64,
}

/// From the record of pair `(0, i)` and `f_i / f_0`:
/// `sigma_i^2(T_0) = sigma'_0i(T_0)^2 / (1 + (f_i/f_0)^3)` and
/// `sigma_0^2(T_0) = sigma_i^2(T_0) f_i / f_0`.
pub fn recover_method1(record: &MeasurementRecord, ratio: f64) -> Result<Method1Estimate> {
    ensure_positive("ratio", ratio)?;
    if record.pair.0 != 0 || record.pair.1 == 0 {
        return Err(invalid("record", format!("method 1 needs a pair (0, i), got {:?}", record.pair)));
    }
    let sigma_sq_t0 = record.accumulated_sigma_prime.squared() / (1.0 + ratio.powi(3));
    Ok(Method1Estimate {
        oscillator: record.pair.1,
        sigma_sq_t0,
        sigma0_sq_t0: sigma_sq_t0 * ratio,
    })
}

/// Method 1 over all pairs `(0, i)`; `sigma_0^2(T_0)` is the mean of the
/// per-pair values. Other pairs are ignored. Each unknown is a scalar
/// rescaling of one measurement, so the condition number is 1.
pub fn recover_method1_all(records: &[MeasurementRecord], ratios: &FrequencyRatios) -> Result<VolatilitySolution> {
    let n = ratios.n();
    let pairs: Vec<(usize, usize)> = (1..=n).map(|i| (0, i)).collect();
    let relevant: Vec<MeasurementRecord> = records.iter().filter(|r| r.pair.0 == 0).cloned().collect();
    let chosen = select_records(&relevant, &pairs)?;
    let estimates = chosen
        .iter()
        .map(|rec| recover_method1(rec, ratios.ratios()[rec.pair.1]))
        .collect::<Result<Vec<_>>>()?;
    let sigma0 = estimates.iter().map(|e| e.sigma0_sq_t0).sum::<f64>() / n as f64;
    let mut x = vec![sigma0];
    x.extend(estimates.iter().map(|e| e.sigma_sq_t0));
    let residual = chosen
        .iter()
        .map(|rec| {
            let i = rec.pair.1;
            (ratios.ratios()[i].powi(2) * x[0] + x[i] - rec.accumulated_sigma_prime.squared()).abs()
        })
        .fold(0.0, f64::max);
    Ok(VolatilitySolution {
        sigma_sq_accumulated: x,
        reference_period: chosen[0].accumulated_sigma_prime.reference_period,
        condition_number_inf: 1.0,
        condition_bound: 1.0,
        residual_inf: residual,
        method: RecoveryMethod::Method1,
        flags: Vec::new(),
    }
    .with_flags())
}
