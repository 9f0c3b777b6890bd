//! Recomputes the FPGA experiments' individual jitters from their measured
//! composed jitters and lists them next to the published figures.
//!
//! The published individual values are not expected to match: their
//! post-processing is not fully specified. Nothing here is asserted.

use std::path::Path;

use jitter_transfer::measurement::{MeasurementMethod, MeasurementRecord};
use jitter_transfer::oscillator::AccumulatedVolatility;
use jitter_transfer::recovery::{recover_method1_all, FrequencyRatios, RatioSource};
use serde::Serialize;

use crate::commands::method2;
use crate::error::CliError;

struct Experiment {
    name: &'static str,
    frequencies_mhz: [f64; 3],
    /// `sigma'_01(T0), sigma'_02(T0), sigma'_12(T1)`
    composed: [f64; 3],
    published_method1: [f64; 3],
    published_method2: [f64; 3],
}

const EXPERIMENTS: [Experiment; 2] = [
    Experiment {
        name: "experiment 1",
        frequencies_mhz: [65.5, 58.0, 70.6],
        composed: [1.503e-3, 2.532e-3, 2.695e-3],
        published_method1: [1.305e-3, 1.368e-3, 1.875e-3],
        published_method2: [0.507e-3, 1.801e-3, 2.246e-3],
    },
    Experiment {
        name: "experiment 2",
        frequencies_mhz: [65.5, 58.9, 71.6],
        composed: [1.857e-3, 2.313e-3, 3.307e-3],
        published_method1: [1.018e-3, 1.193e-3, 2.278e-3],
        published_method2: [1.164e-3, 1.080e-3, 2.195e-3],
    },
];

#[derive(Debug, Serialize)]
struct Row {
    experiment: &'static str,
    oscillator: usize,
    published_method1: f64,
    computed_method1: f64,
    published_method2: f64,
    /// `None` when the recovered variance is negative.
    computed_method2: Option<f64>,
}

fn records(exp: &Experiment) -> Result<Vec<MeasurementRecord>, CliError> {
    let periods = exp.frequencies_mhz.map(|f| 1.0 / (f * 1e6));
    [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .zip(exp.composed)
        .map(|((i, j), value)| {
            Ok(MeasurementRecord {
                pair: (i, j),
                ratio_estimate: exp.frequencies_mhz[j] / exp.frequencies_mhz[i],
                accumulated_sigma_prime: AccumulatedVolatility::new(value, periods[i])?,
                n_bits_used: 1_000_000,
                method: MeasurementMethod::BitMle,
                std_error: None,
                flags: Vec::new(),
            })
        })
        .collect()
}

fn sqrt_or_none(v: f64) -> Option<f64> {
    (v >= 0.0).then(|| v.sqrt())
}

pub fn report(json: Option<&Path>) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for exp in &EXPERIMENTS {
        let ratios = FrequencyRatios::from_frequencies(&exp.frequencies_mhz, RatioSource::Configured)?;
        let recs = records(exp)?;
        let m1 = recover_method1_all(&recs, &ratios)?;
        let m2 = method2(&recs, &ratios)?;
        println!("{} (f = {:?} MHz), sigma_i(T0) in units of 1e-3", exp.name, exp.frequencies_mhz);
        println!("  osc  method 1: published computed   method 2: published computed");
        for i in 0..3 {
            let row = Row {
                experiment: exp.name,
                oscillator: i,
                published_method1: exp.published_method1[i],
                computed_method1: m1.sigma_sq_accumulated[i].sqrt(),
                published_method2: exp.published_method2[i],
                computed_method2: sqrt_or_none(m2.sigma_sq_accumulated[i]),
            };
            let m2s = row
                .computed_method2
                .map_or("negative".to_string(), |v| format!("{:.3}", v * 1e3));
            println!(
                "  {i}    {:>19.3} {:>8.3} {:>19.3} {:>8}",
                row.published_method1 * 1e3,
                row.computed_method1 * 1e3,
                row.published_method2 * 1e3,
                m2s
            );
            rows.push(row);
        }
        println!("  method 2 kappa_inf {:.3} (bound {:.3})", m2.condition_number_inf, m2.condition_bound);
    }
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&rows).expect("serializable rows");
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}
