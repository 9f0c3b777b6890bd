//! Differential jitter measurement from EO-TRNG output bits.
//!
//! Under the transferred-jitter model the sampled phase after `k` sampling
//! edges is `phi + k r + N(0, k s^2)`, where `r` is the frequency ratio and
//! `s` the composed jitter accumulated over one sampler period. Bits are
//! that phase seen through the square wave `w(phase) = [phase mod 1 < duty]`.
//!
//! Two bit-level estimators share that model:
//!
//! * a pairwise (composite) wrapped-normal likelihood: for every lag `d` the
//!   joint law of `(b_k, b_{k+d})`, with the phase at `k` uniform on the
//!   circle, depends only on `d r mod 1` and `d s^2` and has a closed form
//!   through the integrated normal distribution function. Pair counts are
//!   sufficient and come from bit-packed popcounts. It is maximized by
//!   golden-section search over `ln s`.
//! * phase tracking: within a short window the bits pin the phase offset to
//!   an arc of width about `1/W`; the variance of offset increments between
//!   windows grows linearly in the lag with slope `W s^2`.
//!
//! The likelihood always runs on short lags as a pilot. Its value sizes the
//! tracking window, and tracking gives the final estimate unless the phase
//! diffuses too fast to be followed, in which case the likelihood is
//! refitted over a lag range matched to the pilot.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::oscillator::AccumulatedVolatility;
use crate::simulator::BitStream;
use crate::special::{std_normal_cdf, std_normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMethod {
    BitMle,
    PhaseOracle,
}

impl MeasurementMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementMethod::BitMle => "bit_mle",
            MeasurementMethod::PhaseOracle => "phase_oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementFlag {
    /// Relative standard error above [`WIDE_INTERVAL`].
    WideConfidenceInterval,
    /// The estimate sits at the bottom of the search range.
    AtLowerBound,
}

/// Relative standard error beyond which a record is flagged.
pub const WIDE_INTERVAL: f64 = 0.25;

/// Search range for the per-step jitter.
pub const SIGMA_RANGE: (f64, f64) = (1e-6, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// `(sampler, sampled)`
    pub pair: (usize, usize),
    /// `f_sampled / f_sampler`
    pub ratio_estimate: f64,
    /// Composed jitter accumulated over one sampler period.
    pub accumulated_sigma_prime: AccumulatedVolatility,
    pub n_bits_used: usize,
    pub method: MeasurementMethod,
    /// Standard error of `accumulated_sigma_prime.value`.
    #[serde(default)]
    pub std_error: Option<f64>,
    #[serde(default)]
    pub flags: Vec<MeasurementFlag>,
}

pub const CSV_HEADER: &str = "i,j,ratio,sigma_prime,T_ref,n_bits,method";

impl MeasurementRecord {
    pub fn sigma_prime(&self) -> f64 {
        self.accumulated_sigma_prime.value
    }

    /// Row matching [`CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.12e},{:.12e},{:.12e},{},{}",
            self.pair.0,
            self.pair.1,
            self.ratio_estimate,
            self.accumulated_sigma_prime.value,
            self.accumulated_sigma_prime.reference_period,
            self.n_bits_used,
            self.method.as_str()
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != 7 {
            return Err(invalid("csv", format!("expected 7 fields, got {}", fields.len())));
        }
        let int = |s: &str, name: &'static str| s.trim().parse::<usize>().map_err(|e| invalid(name, e.to_string()));
        let real = |s: &str, name: &'static str| s.trim().parse::<f64>().map_err(|e| invalid(name, e.to_string()));
        let method = match fields[6].trim() {
            "bit_mle" => MeasurementMethod::BitMle,
            "phase_oracle" => MeasurementMethod::PhaseOracle,
            other => return Err(invalid("method", format!("unknown method `{other}`"))),
        };
        let ratio = real(fields[2], "ratio")?;
        ensure_positive("ratio", ratio)?;
        Ok(Self {
            pair: (int(fields[0], "i")?, int(fields[1], "j")?),
            ratio_estimate: ratio,
            accumulated_sigma_prime: AccumulatedVolatility::new(real(fields[3], "sigma_prime")?, real(fields[4], "T_ref")?)?,
            n_bits_used: int(fields[5], "n_bits")?,
            method,
            std_error: None,
            flags: Vec::new(),
        })
    }
}

// ---------------------------------------------------------------------------
// frequency ratio

/// Smallest stream the ratio estimator accepts.
pub const MIN_BITS: usize = 256;

/// Peak-to-median periodogram ratio below which no periodicity is accepted.
const MIN_PEAK_CONTRAST: f64 = 20.0;

/// Estimates `f_sampled / f_sampler` from the bits.
///
/// Bits alone only determine the ratio modulo 1 and up to the reflection
/// `r -> 1 - r` (a square wave sampled at phase increments `r` or `-r`
/// produces statistically identical streams), so without `delay_elements`
/// the folded fraction in `(0, 1/2]` is returned. `delay_elements` gives the
/// number of delay stages `(sampler, sampled)` of the two ring oscillators;
/// the nominal ratio `sampler / sampled` then selects the branch.
pub fn estimate_ratio(bits: &BitStream, delay_elements: Option<(u32, u32)>) -> Result<f64> {
    let folded = fractional_ratio(&bits.bits)?;
    match delay_elements {
        None => Ok(folded),
        Some((sampler, sampled)) => {
            if sampler == 0 || sampled == 0 {
                return Err(invalid("delay_elements", "delay element counts must be positive"));
            }
            Ok(resolve_ratio(folded, sampler as f64 / sampled as f64))
        }
    }
}

/// Picks the candidate `m + r` or `m + 1 - r` closest to `nominal`.
pub fn resolve_ratio(folded: f64, nominal: f64) -> f64 {
    let base = nominal.floor();
    let candidates = [base - 1.0, base, base + 1.0]
        .into_iter()
        .flat_map(|m| [m + folded, m + 1.0 - folded])
        .filter(|c| *c > 0.0);
    candidates
        .min_by(|a, b| (a - nominal).abs().total_cmp(&(b - nominal).abs()))
        .unwrap_or(folded)
}

/// Folded fractional frequency ratio in `(0, 1/2]`.
pub fn fractional_ratio(bits: &[u8]) -> Result<f64> {
    let n = bits.len();
    if n < MIN_BITS {
        return Err(Error::EstimationFailed(format!("{n} bits is too short; need at least {MIN_BITS}")));
    }
    let ones = bits.iter().filter(|&&b| b == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::EstimationFailed("constant bit stream has no periodicity".into()));
    }
    let coarse = periodogram_peak(bits)?;
    // two demodulation passes: the first removes the periodogram's bin-level
    // error, the second the residual left by the first
    let r1 = refine_by_demodulation(bits, coarse, 32);
    let r2 = refine_by_demodulation(bits, r1, 128);
    Ok(fold(r2))
}

fn fold(r: f64) -> f64 {
    let f = r.rem_euclid(1.0);
    if f > 0.5 {
        1.0 - f
    } else {
        f
    }
}

fn periodogram_peak(bits: &[u8]) -> Result<f64> {
    let n = bits.len();
    let seg = (n / 4).next_power_of_two().min(4096).max(64).min(n.next_power_of_two() / 2).max(64);
    let seg = if seg > n { n.next_power_of_two() / 2 } else { seg };
    let mean = bits.iter().map(|&b| b as f64).sum::<f64>() / n as f64;
    let window: Vec<f64> = (0..seg)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / seg as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let mut power = vec![0.0; seg / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let segments = n / seg;
    for s in 0..segments {
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new((bits[s * seg + k] as f64 - mean) * window[k], 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
    }
    // skip the DC neighbourhood the Hann window leaks into
    let (peak, &peak_power) = power
        .iter()
        .enumerate()
        .skip(2)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::EstimationFailed("empty periodogram".into()))?;
    let mut sorted: Vec<f64> = power[2..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak_power > MIN_PEAK_CONTRAST * median.max(f64::MIN_POSITIVE)) {
        return Err(Error::EstimationFailed(format!(
            "no significant periodicity (peak/median power {:.1})",
            peak_power / median
        )));
    }
    // parabolic interpolation on log power
    let offset = if peak + 1 < power.len() {
        let (a, b, c) = (power[peak - 1].max(1e-300).ln(), peak_power.ln(), power[peak + 1].max(1e-300).ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok((peak as f64 + offset) / seg as f64)
}

/// Tracks the phase of the bits' fundamental over windows of `window` bits
/// demodulated at `ratio`, and corrects `ratio` by the fitted phase slope.
fn refine_by_demodulation(bits: &[u8], ratio: f64, window: usize) -> f64 {
    let n = bits.len();
    let windows = n / window;
    if windows < 4 {
        return ratio;
    }
    let mean = bits.iter().map(|&b| b as f64).sum::<f64>() / n as f64;
    let step = Complex::from_polar(1.0, -2.0 * PI * ratio);
    let mut angles = Vec::with_capacity(windows);
    let mut weights = Vec::with_capacity(windows);
    for w in 0..windows {
        let start = w * window;
        // restart the oscillator at every window to keep rounding bounded
        let mut rot = Complex::from_polar(1.0, -2.0 * PI * (ratio * start as f64).rem_euclid(1.0));
        let mut acc = Complex::new(0.0, 0.0);
        for &b in &bits[start..start + window] {
            acc += rot * (b as f64 - mean);
            rot *= step;
        }
        angles.push(acc.arg());
        weights.push(acc.norm());
    }
    // unwrap
    let mut unwrapped = Vec::with_capacity(windows);
    let mut offset = 0.0;
    let mut prev = angles[0];
    unwrapped.push(prev);
    for &a in &angles[1..] {
        let mut d = a - prev;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        offset += d;
        unwrapped.push(angles[0] + offset);
        prev = a;
    }
    // weighted least-squares slope in radians per bit
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (w, (&y, &wt)) in unwrapped.iter().zip(&weights).enumerate() {
        let x = (w * window) as f64;
        sw += wt;
        sx += wt * x;
        sy += wt * y;
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (w, (&y, &wt)) in unwrapped.iter().zip(&weights).enumerate() {
        let x = (w * window) as f64 - mx;
        sxx += wt * x * x;
        sxy += wt * x * (y - my);
    }
    if sxx == 0.0 {
        return ratio;
    }
    ratio + sxy / sxx / (2.0 * PI)
}

// ---------------------------------------------------------------------------
// pair counts

/// Joint counts of `(b_k, b_{k+d})` for one lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub lag: usize,
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    fn minus(&self, other: &PairCounts) -> PairCounts {
        PairCounts {
            lag: self.lag,
            n11: self.n11 - other.n11,
            n10: self.n10 - other.n10,
            n01: self.n01 - other.n01,
            n00: self.n00 - other.n00,
        }
    }
}

struct PackedBits {
    words: Vec<u64>,
    len: usize,
}

impl PackedBits {
    fn new(bits: &[u8]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64) + 1];
        for (k, &b) in bits.iter().enumerate() {
            if b == 1 {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        Self { words, len: bits.len() }
    }

    /// 64 bits starting at bit `start` (zero beyond the end).
    #[inline]
    fn window(&self, start: usize) -> u64 {
        let (w, s) = (start / 64, start % 64);
        let lo = self.words[w] >> s;
        if s == 0 || w + 1 >= self.words.len() {
            lo
        } else {
            lo | (self.words[w + 1] << (64 - s))
        }
    }
}

/// Pair counts over `k in [begin, end)` with `k + lag < len`.
fn count_range(packed: &PackedBits, prefix: &[u64], lag: usize, begin: usize, end: usize) -> PairCounts {
    let end = end.min(packed.len.saturating_sub(lag));
    if begin >= end {
        return PairCounts {
            lag,
            ..PairCounts::default()
        };
    }
    let mut n11 = 0u64;
    let mut k = begin;
    while k < end {
        let take = (end - k).min(64);
        let mask = if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
        n11 += (packed.window(k) & packed.window(k + lag) & mask).count_ones() as u64;
        k += take;
    }
    let total = (end - begin) as u64;
    let first_ones = prefix[end] - prefix[begin];
    let second_ones = prefix[end + lag] - prefix[begin + lag];
    PairCounts {
        lag,
        n11,
        n10: first_ones - n11,
        n01: second_ones - n11,
        n00: total + n11 - first_ones - second_ones,
    }
}

fn prefix_ones(bits: &[u8]) -> Vec<u64> {
    let mut prefix = Vec::with_capacity(bits.len() + 1);
    let mut acc = 0u64;
    prefix.push(0);
    for &b in bits {
        acc += b as u64;
        prefix.push(acc);
    }
    prefix
}

/// Pair counts for each lag over the whole stream.
pub fn pair_counts(bits: &[u8], lags: &[usize]) -> Vec<PairCounts> {
    let packed = PackedBits::new(bits);
    let prefix = prefix_ones(bits);
    lags.iter()
        .map(|&lag| count_range(&packed, &prefix, lag, 0, bits.len()))
        .collect()
}

// ---------------------------------------------------------------------------
// pair probabilities

/// Antiderivative of the normal distribution function with scale `sd`;
/// the ramp `max(x, 0)` when `sd == 0`.
#[inline]
fn integrated_cdf(x: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return x.max(0.0);
    }
    let u = x / sd;
    sd * (u * std_normal_cdf(u) + std_normal_pdf(u))
}

/// Probability that `b_k = b_{k+d} = 1` when the phase at `k` is uniform,
/// the phase advances by `drift` (mod 1) with normal spread `sd`, and the
/// wave is high on `[0, duty)`.
///
/// Integrating the wrapped-normal transition over the high interval gives
/// `sum_j G(j + duty - drift) - 2 G(j - drift) + G(j - drift - duty)`, with
/// `G` the integrated normal distribution function. Terms whose arguments
/// all lie beyond six standard deviations vanish and are dropped.
pub fn prob_both_high(drift: f64, sd: f64, duty: f64) -> f64 {
    let m = drift.rem_euclid(1.0);
    let reach = 6.0 * sd;
    let lo = (m - duty - reach).floor() as i64;
    let hi = (m + duty + reach).ceil() as i64;
    let mut p = 0.0;
    for j in lo..=hi {
        let x = j as f64 - m;
        p += integrated_cdf(x + duty, sd) - 2.0 * integrated_cdf(x, sd) + integrated_cdf(x - duty, sd);
    }
    p.clamp(0.0, duty)
}

const PROB_FLOOR: f64 = 1e-12;

/// Composite log-likelihood of per-step jitter `sigma` given the pair counts.
pub fn composite_log_likelihood(counts: &[PairCounts], ratio: f64, duty: f64, sigma: f64) -> f64 {
    counts
        .iter()
        .map(|c| {
            let d = c.lag as f64;
            let p11 = prob_both_high(d * ratio, sigma * d.sqrt(), duty);
            let p10 = (duty - p11).max(PROB_FLOOR);
            let p00 = (1.0 - 2.0 * duty + p11).max(PROB_FLOOR);
            let p11 = p11.max(PROB_FLOOR);
            c.n11 as f64 * p11.ln() + (c.n10 + c.n01) as f64 * p10.ln() + c.n00 as f64 * p00.ln()
        })
        .sum()
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes the composite likelihood over `ln sigma` in `[ln lo, ln hi]`,
/// golden-section search on three sub-brackets; the best of the three wins.
fn maximize_sigma(counts: &[PairCounts], ratio: f64, duty: f64, lo: f64, hi: f64, starts: usize) -> Result<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let width = (b - a) / starts as f64;
    let mut best: Option<(f64, f64)> = None;
    for s in 0..starts {
        let (x, fx) = golden_max(
            |t| composite_log_likelihood(counts, ratio, duty, t.exp()),
            a + s as f64 * width,
            a + (s + 1) as f64 * width,
            1e-6,
        );
        if fx.is_finite() && best.map_or(true, |(_, fb)| fx > fb) {
            best = Some((x, fx));
        }
    }
    best.map(|(x, _)| x.exp())
        .ok_or_else(|| Error::EstimationFailed("composite likelihood is not finite on the search range".into()))
}

/// Lags `1..=max_lag`, thinned to at most `budget` values: dense up to
/// `budget / 2`, then evenly strided.
fn lag_set(max_lag: usize, budget: usize) -> Vec<usize> {
    let dense = (budget / 2).min(max_lag);
    let mut lags: Vec<usize> = (1..=dense).collect();
    if max_lag > dense {
        let rest = budget - dense;
        let stride = ((max_lag - dense) as f64 / rest as f64).max(1.0);
        let mut x = dense as f64 + stride;
        while (x.round() as usize) <= max_lag {
            let lag = x.round() as usize;
            if lag > *lags.last().unwrap() {
                lags.push(lag);
            }
            x += stride;
        }
    }
    lags
}

/// Tuning of the bit-level estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleSettings {
    /// Target accumulated phase variance `d s^2` at the largest lag.
    pub target_spread: f64,
    /// Largest lag as a fraction of the stream length.
    pub max_lag_fraction: f64,
    /// Number of lags entering the likelihood.
    pub lag_budget: usize,
    /// Contiguous blocks for the jackknife standard error.
    pub jackknife_blocks: usize,
    /// Phase tracking uses windows of `W` bits with `W^3 s^2` at least this.
    pub tracking_constant: f64,
    /// Largest gap allowed between the nominal phases `k r mod 1` of a window.
    pub max_coverage_gap: f64,
    /// Phase tracking is abandoned when `sqrt(W) s` exceeds this.
    pub max_window_spread: f64,
    /// Fewest windows phase tracking accepts.
    pub min_windows: usize,
    /// Window lags entering the structure-function fit.
    pub structure_lags: usize,
}

impl Default for MleSettings {
    fn default() -> Self {
        Self {
            target_spread: 0.05,
            max_lag_fraction: 0.05,
            lag_budget: 3000,
            jackknife_blocks: 10,
            tracking_constant: 0.2,
            max_coverage_gap: 1.0 / 16.0,
            max_window_spread: 0.1,
            min_windows: 256,
            structure_lags: 4,
        }
    }
}

/// Bit-level estimate of the composed jitter accumulated over one sampler
/// period, for a known frequency ratio `f_sampled / f_sampler`.
pub fn estimate_total_jitter(bits: &BitStream, ratio: f64, duty: f64) -> Result<MeasurementRecord> {
    estimate_total_jitter_with(bits, ratio, duty, &MleSettings::default())
}

pub fn estimate_total_jitter_with(
    bits: &BitStream,
    ratio: f64,
    duty: f64,
    settings: &MleSettings,
) -> Result<MeasurementRecord> {
    ensure_positive("ratio", ratio)?;
    if !(duty > 0.0 && duty < 1.0) {
        return Err(invalid("duty", format!("must lie in (0, 1), got {duty}")));
    }
    let n = bits.len();
    if n < MIN_BITS {
        return Err(Error::EstimationFailed(format!("{n} bits is too short; need at least {MIN_BITS}")));
    }
    let ones = bits.ones();
    if ones == 0 || ones == n {
        return Err(Error::EstimationFailed("constant bit stream carries no phase information".into()));
    }
    // the likelihood needs the drift to well below one cycle at the largest
    // lag, tighter than a configured or coarse ratio provides
    let drift = refine_by_demodulation(&bits.bits, refine_by_demodulation(&bits.bits, ratio.fract(), 32), 128);

    let max_lag_cap = ((n as f64 * settings.max_lag_fraction) as usize).max(8);
    let packed = PackedBits::new(&bits.bits);
    let prefix = prefix_ones(&bits.bits);
    let counts_for = |lags: &[usize]| -> Vec<PairCounts> {
        lags.iter().map(|&d| count_range(&packed, &prefix, d, 0, n)).collect()
    };

    // pilot on short lags: sizes both the tracking window and the lag range
    let pilot_lags = lag_set(max_lag_cap.min(512), settings.lag_budget.min(512));
    let pilot_counts = counts_for(&pilot_lags);
    let pilot = maximize_sigma(&pilot_counts, drift, duty, SIGMA_RANGE.0, SIGMA_RANGE.1, 3)?;

    let (sigma, std_error) = match tracking_window(pilot, drift, n, settings) {
        Some(window) => track_estimate(&bits.bits, drift, duty, window, settings),
        None => {
            let max_lag = ((settings.target_spread / (pilot * pilot)) as usize).clamp(8, max_lag_cap);
            let lags = lag_set(max_lag, settings.lag_budget);
            let counts = counts_for(&lags);
            let sigma = maximize_sigma(&counts, drift, duty, SIGMA_RANGE.0, SIGMA_RANGE.1, 3)?;
            let se = jackknife(&packed, &prefix, &lags, &counts, drift, duty, sigma, settings.jackknife_blocks);
            (sigma, se)
        }
    };

    let mut flags = Vec::new();
    let at_bound = sigma < 10.0 * SIGMA_RANGE.0;
    if at_bound {
        flags.push(MeasurementFlag::AtLowerBound);
    }
    // at the bound the replicates are clamped too, so their spread says nothing
    if at_bound || std_error.map_or(true, |se| !(se <= WIDE_INTERVAL * sigma)) {
        flags.push(MeasurementFlag::WideConfidenceInterval);
    }
    Ok(MeasurementRecord {
        pair: bits.pair,
        ratio_estimate: ratio,
        accumulated_sigma_prime: AccumulatedVolatility::new(sigma, bits.sampler_period)?,
        n_bits_used: n,
        method: MeasurementMethod::BitMle,
        std_error,
        flags,
    })
}

/// Delete-one-block jackknife over contiguous blocks of sampling edges.
#[allow(clippy::too_many_arguments)]
fn jackknife(
    packed: &PackedBits,
    prefix: &[u64],
    lags: &[usize],
    counts: &[PairCounts],
    drift: f64,
    duty: f64,
    sigma: f64,
    blocks: usize,
) -> Option<f64> {
    if blocks < 2 {
        return None;
    }
    let n = packed.len;
    let block_len = n.div_ceil(blocks);
    let lo = (sigma * 0.25).max(SIGMA_RANGE.0);
    let hi = (sigma * 4.0).min(SIGMA_RANGE.1);
    let mut replicates = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let (begin, end) = (b * block_len, ((b + 1) * block_len).min(n));
        let kept: Vec<PairCounts> = lags
            .iter()
            .zip(counts)
            .map(|(&d, total)| total.minus(&count_range(packed, prefix, d, begin, end)))
            .collect();
        replicates.push(maximize_sigma(&kept, drift, duty, lo, hi, 1).ok()?);
    }
    let mean = replicates.iter().sum::<f64>() / blocks as f64;
    let ss: f64 = replicates.iter().map(|r| (r - mean).powi(2)).sum();
    Some(((blocks - 1) as f64 / blocks as f64 * ss).sqrt())
}

/// Oracle estimator reading the recorded unwrapped phases: the ratio is the
/// mean per-step increment and the accumulated jitter its standard deviation.
pub fn estimate_from_phases(bits: &BitStream) -> Result<MeasurementRecord> {
    let phases = bits.ground_truth_phases.as_ref().ok_or(Error::MissingPhases)?;
    if phases.len() < 3 {
        return Err(Error::EstimationFailed("need at least three recorded phases".into()));
    }
    let increments: Vec<f64> = phases.windows(2).map(|w| w[1] - w[0]).collect();
    let m = increments.len() as f64;
    let mean = increments.iter().sum::<f64>() / m;
    let var = increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let sigma = var.sqrt();
    if !(mean > 0.0) {
        return Err(Error::EstimationFailed(format!("mean phase increment {mean} is not positive")));
    }
    // normal-theory standard error of a standard deviation
    let std_error = sigma / (2.0 * (m - 1.0)).sqrt();
    Ok(MeasurementRecord {
        pair: bits.pair,
        ratio_estimate: mean,
        accumulated_sigma_prime: AccumulatedVolatility::new(sigma, bits.sampler_period)?,
        n_bits_used: bits.len(),
        method: MeasurementMethod::PhaseOracle,
        std_error: Some(std_error),
        flags: Vec::new(),
    })
}

/// Ratio estimation followed by the bit-level jitter fit.
pub fn measure(bits: &BitStream, delay_elements: Option<(u32, u32)>) -> Result<MeasurementRecord> {
    let ratio = estimate_ratio(bits, delay_elements)?;
    estimate_total_jitter(bits, ratio, bits.duty_cycle)
}

// ---------------------------------------------------------------------------
// phase tracking

/// Phase offset of one window of bits against the nominal progression
/// `g r` (`g` the global bit index): the mid-point of the arc of offsets
/// consistent with the largest number of bits.
fn window_offset(bits: &[u8], start: usize, ratio: f64, duty: f64, events: &mut Vec<(f64, i32)>) -> f64 {
    events.clear();
    let mut score = 0i32;
    for (k, &b) in bits.iter().enumerate() {
        let theta = ((start + k) as f64 * ratio).rem_euclid(1.0);
        let (a, len) = if b == 1 { (-theta, duty) } else { (duty - theta, 1.0 - duty) };
        let a = a.rem_euclid(1.0);
        let e = a + len;
        if e >= 1.0 {
            // the arc covers offset 0
            score += 1;
            events.push((e - 1.0, -1));
            events.push((a, 1));
        } else {
            events.push((a, 1));
            events.push((e, -1));
        }
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let (mut best, mut best_start, mut best_len) = (score, 0.0, 0.0);
    let mut pos = 0.0;
    for &(p, delta) in events.iter() {
        let len = p - pos;
        if score > best || (score == best && len > best_len) {
            best = score;
            best_start = pos;
            best_len = len;
        }
        score += delta;
        pos = p;
    }
    let len = 1.0 - pos;
    if score > best || (score == best && len > best_len) {
        best_start = pos;
        best_len = len;
    }
    (best_start + 0.5 * best_len).rem_euclid(1.0)
}

/// Unwrapped phase offsets of consecutive windows of `window` bits.
pub fn track_phase(bits: &[u8], ratio: f64, duty: f64, window: usize) -> Vec<f64> {
    let windows = bits.len() / window;
    let mut events = Vec::with_capacity(2 * window);
    let mut out = Vec::with_capacity(windows);
    let mut prev = 0.0;
    for w in 0..windows {
        let start = w * window;
        let raw = window_offset(&bits[start..start + window], start, ratio, duty, &mut events);
        let next = if w == 0 { raw } else { prev + (raw - prev - (raw - prev).round()) };
        out.push(next);
        prev = next;
    }
    out
}

/// Slope in `D` of the variance of `psi[w + D] - psi[w]`, `D = 1..=max_lag`.
pub fn structure_slope(psi: &[f64], max_lag: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (1..=max_lag)
        .filter(|&d| d + 1 < psi.len())
        .map(|d| {
            let inc: Vec<f64> = psi.windows(d + 1).map(|w| w[d] - w[0]).collect();
            let m = inc.len() as f64;
            let mean = inc.iter().sum::<f64>() / m;
            (d as f64, inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Largest gap between the points `k r mod 1`, `k < window`, on the circle.
fn coverage_gap(ratio: f64, window: usize) -> f64 {
    let mut pts: Vec<f64> = (0..window).map(|k| (k as f64 * ratio).rem_euclid(1.0)).collect();
    pts.sort_by(f64::total_cmp);
    let wrap = pts[0] + 1.0 - pts[pts.len() - 1];
    pts.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}

/// Tracking window for pilot jitter `pilot`, or `None` when the phase moves
/// too far within a window to be unwrapped reliably.
fn tracking_window(pilot: f64, drift: f64, n: usize, settings: &MleSettings) -> Option<usize> {
    let cap = n / settings.min_windows;
    if cap < 16 {
        return None;
    }
    let diffusion = (settings.tracking_constant / (pilot * pilot)).cbrt().ceil();
    let mut window = if diffusion.is_finite() { (diffusion as usize).clamp(16, cap) } else { cap };
    while window < cap && coverage_gap(drift, window) > settings.max_coverage_gap {
        window = (window * 3 / 2).min(cap);
    }
    (pilot * (window as f64).sqrt() <= settings.max_window_spread).then_some(window)
}

/// Per-lag sums of window-phase increments `psi[w + d] - psi[w]`, split by
/// the jackknife block holding `w`.
struct IncrementSums {
    /// `[block][lag] -> (count, sum, sum of squares)`
    sums: Vec<Vec<(f64, f64, f64)>>,
}

impl IncrementSums {
    fn new(psi: &[f64], lags: usize, blocks: usize) -> Self {
        let block_len = psi.len().div_ceil(blocks);
        let mut sums = vec![vec![(0.0, 0.0, 0.0); lags]; blocks];
        for d in 1..=lags {
            for w in 0..psi.len().saturating_sub(d) {
                let inc = psi[w + d] - psi[w];
                let slot = &mut sums[w / block_len][d - 1];
                slot.0 += 1.0;
                slot.1 += inc;
                slot.2 += inc * inc;
            }
        }
        Self { sums }
    }

    /// Per-step jitter from the structure-function slope, leaving out one block.
    fn sigma(&self, window: usize, skip: Option<usize>) -> f64 {
        let lags = self.sums[0].len();
        let points: Vec<(f64, f64)> = (0..lags)
            .filter_map(|d| {
                let (c, s, q) = self
                    .sums
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| Some(*b) != skip)
                    .fold((0.0, 0.0, 0.0), |acc, (_, row)| (acc.0 + row[d].0, acc.1 + row[d].1, acc.2 + row[d].2));
                (c > 1.0).then(|| ((d + 1) as f64, (q - s * s / c) / (c - 1.0)))
            })
            .collect();
        let k = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
        let my = points.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxy / sxx / window as f64).max(SIGMA_RANGE.0 * SIGMA_RANGE.0).sqrt()
    }
}

/// Jitter from the tracked phase: the variance of window-phase increments
/// grows by `W s^2` per window of lag, while quantization of the per-window
/// estimate and in-window averaging only add a lag-independent offset.
fn track_estimate(bits: &[u8], drift: f64, duty: f64, window: usize, settings: &MleSettings) -> (f64, Option<f64>) {
    let psi = track_phase(bits, drift, duty, window);
    let blocks = settings.jackknife_blocks.max(1);
    let sums = IncrementSums::new(&psi, settings.structure_lags.max(2), blocks);
    let sigma = sums.sigma(window, None);
    if blocks < 2 {
        return (sigma, None);
    }
    let reps: Vec<f64> = (0..blocks).map(|b| sums.sigma(window, Some(b))).collect();
    let mean = reps.iter().sum::<f64>() / blocks as f64;
    let ss: f64 = reps.iter().map(|r| (r - mean).powi(2)).sum();
    (sigma, Some(((blocks - 1) as f64 / blocks as f64 * ss).sqrt()))
}
