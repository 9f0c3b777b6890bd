//! Quality of the normal approximation to the exact NIG law of the
//! sampled-phase increment: density comparison, total-variation distance
//! and its scaling with the jitter level.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::distributions::{nig_cdf, nig_of_pair, nig_pdf, NigParams, NormalParams};
use crate::error::{ensure_positive, invalid, Result};
use crate::quad::{integrate_split, Tolerance};

/// Half-width of the TV integration range in standard deviations.
pub const TV_RANGE_SDS: f64 = 40.0;

/// Absolute tolerance of the TV quadrature.
pub const TV_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyPoint {
    /// `sqrt(sigma^2 / f)`, the relative standard deviation of one period.
    pub jitter_level: f64,
    pub tv_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub phase: f64,
    pub pdf_exact: f64,
    pub pdf_approx: f64,
}

/// Normal limit of the per-cycle increment: mean `f1/f0`, variance
/// `sigma1^2/f0 + f1^2 sigma0^2 / f0^3`.
pub fn normal_approx_params(f0: f64, sigma0: f64, f1: f64, sigma1: f64) -> Result<NormalParams> {
    ensure_positive("f0", f0)?;
    ensure_positive("f1", f1)?;
    let var = sigma1 * sigma1 / f0 + f1 * f1 * sigma0 * sigma0 / f0.powi(3);
    NormalParams::new(f1 / f0, var.sqrt())
}

/// `1/2 int |f - g|` over `[lo, hi]`.
pub fn tv_between<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(f: F, g: G, lo: f64, hi: f64) -> Result<f64> {
    let est = integrate_split(|x| (f(x) - g(x)).abs(), lo, hi, 64, Tolerance::absolute(TV_TOLERANCE))?;
    Ok((0.5 * est.value).clamp(0.0, 1.0))
}

/// Total variation between the exact NIG law and its normal approximation,
/// integrated over the mean plus or minus [`TV_RANGE_SDS`] standard deviations.
pub fn tv_distance(exact: &NigParams, approx: &NormalParams) -> Result<f64> {
    if approx.is_degenerate() {
        return Err(invalid("approx", "degenerate normal law has no density"));
    }
    let sd = approx.std.max(exact.std_dev());
    let (lo, hi) = (approx.mean - TV_RANGE_SDS * sd, approx.mean + TV_RANGE_SDS * sd);
    tv_between(|x| nig_pdf(x, exact), |x| approx.pdf(x), lo, hi)
}

/// Oscillator pair at a given jitter level: `f0 = 1`, `f1 = f_ratio`, and
/// volatilities with `sigma_i^2 / f_i = level^2`.
pub fn pair_at_level(level: f64, f_ratio: f64) -> (f64, f64, f64, f64) {
    (1.0, level, f_ratio, level * f_ratio.sqrt())
}

fn laws_at_level(level: f64, f_ratio: f64) -> Result<(NigParams, NormalParams)> {
    if !(level > 0.0 && level < 0.5) {
        return Err(invalid("level", format!("must lie in (0, 0.5), got {level}")));
    }
    ensure_positive("f_ratio", f_ratio)?;
    let (f0, s0, f1, s1) = pair_at_level(level, f_ratio);
    Ok((nig_of_pair(f0, s0, f1, s1)?, normal_approx_params(f0, s0, f1, s1)?))
}

pub fn discrepancy_sweep(levels: &[f64], f_ratio: f64) -> Result<Vec<DiscrepancyPoint>> {
    levels
        .iter()
        .map(|&level| {
            let (exact, approx) = laws_at_level(level, f_ratio)?;
            Ok(DiscrepancyPoint {
                jitter_level: level,
                tv_distance: tv_distance(&exact, &approx)?,
            })
        })
        .collect()
}

/// Both densities on `points` equally spaced phases over the mean plus or
/// minus `width_sds` standard deviations.
pub fn density_comparison(level: f64, f_ratio: f64, points: usize, width_sds: f64) -> Result<Vec<DensityRow>> {
    if points < 2 {
        return Err(invalid("points", "need at least two points"));
    }
    ensure_positive("width_sds", width_sds)?;
    let (exact, approx) = laws_at_level(level, f_ratio)?;
    let (lo, hi) = (approx.mean - width_sds * approx.std, approx.mean + width_sds * approx.std);
    Ok((0..points)
        .map(|k| {
            let phase = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            DensityRow {
                phase,
                pdf_exact: nig_pdf(phase, &exact),
                pdf_approx: approx.pdf(phase),
            }
        })
        .collect())
}

/// Ordinary least-squares slope of `ln tv` against `ln level`.
pub fn log_log_slope(points: &[DiscrepancyPoint]) -> Result<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.jitter_level > 0.0 && p.tv_distance > 0.0)
        .map(|p| (p.jitter_level.ln(), p.tv_distance.ln()))
        .collect();
    if usable.len() < 2 {
        return Err(invalid("points", "need two points with positive level and distance"));
    }
    let k = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / k;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "all jitter levels are equal"));
    }
    Ok(sxy / sxx)
}

/// Half the L1 distance between the histogram of `samples` and the bin
/// probabilities of `law`: `bins` equal bins over the mean plus or minus
/// five standard deviations and one open bin on either side.
pub fn binned_empirical_tv(samples: &[f64], law: &NigParams, bins: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("samples", "empty"));
    }
    if bins < 1 {
        return Err(invalid("bins", "need at least one bin"));
    }
    let (mean, sd) = (law.mean(), law.std_dev());
    let (lo, hi) = (mean - 5.0 * sd, mean + 5.0 * sd);
    let width = (hi - lo) / bins as f64;
    let mut edges = Vec::with_capacity(bins + 1);
    for k in 0..=bins {
        edges.push(lo + width * k as f64);
    }
    let cdf: Vec<f64> = edges.iter().map(|&x| nig_cdf(x, law)).collect::<Result<_>>()?;
    // open tail bins first and last
    let mut probs = Vec::with_capacity(bins + 2);
    probs.push(cdf[0]);
    probs.extend(cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)));
    probs.push(1.0 - cdf[bins]);

    let mut counts = vec![0u64; bins + 2];
    for &x in samples {
        let slot = if x < lo {
            0
        } else if x >= hi {
            bins + 1
        } else {
            1 + (((x - lo) / width) as usize).min(bins - 1)
        };
        counts[slot] += 1;
    }
    let n = samples.len() as f64;
    Ok(0.5 * counts.iter().zip(&probs).map(|(&c, &p)| (c as f64 / n - p).abs()).sum::<f64>())
}

pub const DISCREPANCY_HEADER: &str = "jitter,discrepancy";
pub const DENSITY_HEADER: &str = "phase,pdfexact,pdfapprox";

pub fn write_discrepancy_csv<W: Write>(mut out: W, points: &[DiscrepancyPoint]) -> io::Result<()> {
    writeln!(out, "{DISCREPANCY_HEADER}")?;
    for p in points {
        writeln!(out, "{:e},{:e}", p.jitter_level, p.tv_distance)?;
    }
    Ok(())
}

pub fn write_density_csv<W: Write>(mut out: W, rows: &[DensityRow]) -> io::Result<()> {
    writeln!(out, "{DENSITY_HEADER}")?;
    for r in rows {
        writeln!(out, "{:.15e},{:.15e},{:.15e}", r.phase, r.pdf_exact, r.pdf_approx)?;
    }
    Ok(())
}
