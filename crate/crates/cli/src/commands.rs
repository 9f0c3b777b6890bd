use std::fs;
use std::path::{Path, PathBuf};

use jitter_transfer::artifacts::{pack_bits, read_phases, stream_from_parts, write_bits_csv, write_phases, StreamMetadata};
use jitter_transfer::diagnostics::{density_comparison, discrepancy_sweep, log_log_slope, write_density_csv, write_discrepancy_csv};
use jitter_transfer::measurement::{
    estimate_from_phases, estimate_ratio, estimate_total_jitter, resolve_ratio, MeasurementRecord, CSV_HEADER,
};
use jitter_transfer::recovery::{
    recover_method1_all, recover_method2_3osc, recover_method2_general, FrequencyRatios, RatioSource, VolatilitySolution,
};
use jitter_transfer::simulator::{simulate_topology, BitStream};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{MethodArg, RecoverArg};

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable value")
}

pub fn stream_stem(pair: (usize, usize)) -> String {
    format!("pair_{}_{}", pair.0, pair.1)
}

pub fn simulate(config: &Path, seed: u64, out_dir: Option<PathBuf>, phases: bool, csv: bool) -> Result<(), CliError> {
    let cfg = RunConfig::from_file(config)?;
    let sim = cfg.simulation_config(seed)?;
    let dir = out_dir
        .or_else(|| cfg.output.as_ref().map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let streams = simulate_topology(&sim)?;
    for stream in &streams {
        let stem = dir.join(stream_stem(stream.pair));
        let mut meta = StreamMetadata::of_stream(stream);
        meta.nominal_ratio = Some(cfg.nominal_ratio(stream.pair)?);
        meta.delay_elements = cfg.delay_elements(stream.pair);
        write_file(&stem.with_extension("bits"), &pack_bits(&stream.bits))?;
        write_file(&stem.with_extension("json"), to_json(&meta).as_bytes())?;
        if phases {
            let mut buf = Vec::new();
            write_phases(&mut buf, stream.ground_truth_phases.as_deref().unwrap_or_default()).expect("in-memory write");
            write_file(&stem.with_extension("phases"), &buf)?;
        }
        if csv {
            let mut buf = Vec::new();
            write_bits_csv(&mut buf, &stream.bits).expect("in-memory write");
            write_file(&stem.with_extension("csv"), &buf)?;
        }
        println!(
            "pair ({}, {}): {} bits, ones fraction {:.4} -> {}",
            stream.pair.0,
            stream.pair.1,
            stream.len(),
            stream.ones() as f64 / stream.len().max(1) as f64,
            stem.with_extension("bits").display()
        );
    }
    Ok(())
}

struct Input {
    stream: BitStream,
    nominal_ratio: Option<f64>,
    delay_elements: Option<(u32, u32)>,
}

fn load_stream(path: &Path) -> Result<Input, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.is_empty() {
        return Err(CliError::Usage(format!("{}: bit file is empty", path.display())));
    }
    let meta_path = path.with_extension("json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
    let meta: StreamMetadata = serde_json::from_str(&meta_text)
        .map_err(|e| CliError::Config(format!("in {}: {e}", meta_path.display())))?;
    let phases_path = path.with_extension("phases");
    let phases = if phases_path.exists() {
        let file = fs::File::open(&phases_path).map_err(|e| CliError::io(&phases_path, e))?;
        Some(read_phases(file).map_err(|e| CliError::io(&phases_path, e))?)
    } else {
        None
    };
    let stream = stream_from_parts(&bytes, &meta, phases)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(Input {
        stream,
        nominal_ratio: meta.nominal_ratio,
        delay_elements: meta.delay_elements,
    })
}

fn measure_one(input: &Input, method: MethodArg, delay: Option<(u32, u32)>) -> Result<MeasurementRecord, CliError> {
    match method {
        MethodArg::PhaseOracle => Ok(estimate_from_phases(&input.stream)?),
        MethodArg::BitMle => {
            let folded = estimate_ratio(&input.stream, None)?;
            let ratio = match (delay.or(input.delay_elements), input.nominal_ratio) {
                (Some((sampler, sampled)), _) => resolve_ratio(folded, sampler as f64 / sampled as f64),
                (None, Some(nominal)) => resolve_ratio(folded, nominal),
                (None, None) => folded,
            };
            Ok(estimate_total_jitter(&input.stream, ratio, input.stream.duty_cycle)?)
        }
    }
}

pub fn measure(
    bits: &[PathBuf],
    config: Option<&Path>,
    seed: Option<u64>,
    method: MethodArg,
    delay: Option<(u32, u32)>,
    json: Option<&Path>,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    let inputs: Vec<Input> = match config {
        Some(path) => {
            let cfg = RunConfig::from_file(path)?;
            let seed = seed.ok_or_else(|| CliError::Usage("--config needs --seed".into()))?;
            simulate_topology(&cfg.simulation_config(seed)?)?
                .into_iter()
                .map(|stream| {
                    Ok(Input {
                        nominal_ratio: Some(cfg.nominal_ratio(stream.pair)?),
                        delay_elements: cfg.delay_elements(stream.pair),
                        stream,
                    })
                })
                .collect::<Result<_, CliError>>()?
        }
        None if bits.is_empty() => return Err(CliError::Usage("give --bits files or --config with --seed".into())),
        None => bits.iter().map(|p| load_stream(p)).collect::<Result<_, _>>()?,
    };
    let records = inputs
        .iter()
        .map(|input| measure_one(input, method, delay))
        .collect::<Result<Vec<_>, _>>()?;

    let mut table = format!("{CSV_HEADER}\n");
    for rec in &records {
        table.push_str(&rec.to_csv_row());
        table.push('\n');
        let se = rec.std_error.map_or("n/a".to_string(), |s| format!("{s:.3e}"));
        eprintln!(
            "pair ({}, {}): sigma'(T_ref) = {:.4e} (se {se}), ratio {:.6}{}",
            rec.pair.0,
            rec.pair.1,
            rec.sigma_prime(),
            rec.ratio_estimate,
            if rec.flags.is_empty() { String::new() } else { format!(", flags {:?}", rec.flags) }
        );
    }
    print!("{table}");
    if let Some(path) = csv {
        write_file(path, table.as_bytes())?;
    }
    if let Some(path) = json {
        write_file(path, to_json(&records).as_bytes())?;
    }
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<MeasurementRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Err(CliError::Usage(format!("{}: no records", path.display())));
    }
    let records: Vec<MeasurementRecord> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| CliError::Config(format!("in {}: {e}", path.display())))?
    } else {
        trimmed
            .lines()
            .filter(|l| !l.trim().is_empty() && l.trim() != CSV_HEADER)
            .map(|l| MeasurementRecord::from_csv_row(l).map_err(|e| CliError::Config(format!("in {}: {e}", path.display()))))
            .collect::<Result<_, _>>()?
    };
    if records.is_empty() {
        return Err(CliError::Usage(format!("{}: no records", path.display())));
    }
    Ok(records)
}

/// `f_i / f_0` from the ratio estimates of the `(0, i)` records.
fn ratios_from_records(records: &[MeasurementRecord]) -> Result<FrequencyRatios, CliError> {
    let n = records.iter().map(|r| r.pair.0.max(r.pair.1)).max().unwrap_or(0);
    let mut ratios = vec![1.0];
    for i in 1..=n {
        let rec = records
            .iter()
            .find(|r| r.pair == (0, i))
            .ok_or_else(|| CliError::Usage(format!("no record for pair (0, {i}) to read f_{i}/f_0 from; pass --ratios")))?;
        ratios.push(rec.ratio_estimate);
    }
    Ok(FrequencyRatios::new(ratios, RatioSource::Measured)?)
}

fn print_solution(label: &str, sol: &VolatilitySolution) {
    println!("{label} (T0 = {:e} s)", sol.reference_period);
    println!("  osc   sigma_i(T0)    sigma_i^2(T0)");
    for (i, v) in sol.sigma_sq_accumulated.iter().enumerate() {
        let s = if *v >= 0.0 { format!("{:.4e}", v.sqrt()) } else { "negative".to_string() };
        println!("  {i:<5} {s:<14} {v:.4e}");
    }
    println!(
        "  kappa_inf {:.4}, bound {:.4}, residual {:.3e}{}",
        sol.condition_number_inf,
        sol.condition_bound,
        sol.residual_inf,
        if sol.flags.is_empty() { String::new() } else { format!(", flags {:?}", sol.flags) }
    );
}

pub fn method2(records: &[MeasurementRecord], ratios: &FrequencyRatios) -> Result<VolatilitySolution, CliError> {
    Ok(if ratios.n() == 2 {
        recover_method2_3osc(records, ratios)?
    } else {
        recover_method2_general(records, ratios)?
    })
}

#[derive(Serialize)]
struct Comparison {
    method1: VolatilitySolution,
    method2: VolatilitySolution,
    /// `sigma_i(T0)` of method 1 relative to method 2, minus one.
    relative_difference: Vec<f64>,
}

pub fn recover(
    records_path: &Path,
    ratios: Option<Vec<f64>>,
    periods: Option<Vec<f64>>,
    method: RecoverArg,
    json: Option<&Path>,
) -> Result<(), CliError> {
    let records = load_records(records_path)?;
    let ratios = match (ratios, periods) {
        (Some(r), _) => FrequencyRatios::new(r, RatioSource::Configured)?,
        (None, Some(p)) => FrequencyRatios::from_periods(&p, RatioSource::Configured)?,
        (None, None) => ratios_from_records(&records)?,
    };
    let out = match method {
        RecoverArg::One => {
            let sol = recover_method1_all(&records, &ratios)?;
            print_solution("method 1", &sol);
            to_json(&sol)
        }
        RecoverArg::Two => {
            let sol = method2(&records, &ratios)?;
            print_solution("method 2", &sol);
            to_json(&sol)
        }
        RecoverArg::Both => {
            let m1 = recover_method1_all(&records, &ratios)?;
            let m2 = method2(&records, &ratios)?;
            print_solution("method 1", &m1);
            print_solution("method 2", &m2);
            let rel: Vec<f64> = m1
                .sigma_accumulated()
                .iter()
                .zip(m2.sigma_accumulated())
                .map(|(a, b)| a / b - 1.0)
                .collect();
            println!("method 1 vs method 2, sigma_i(T0) relative difference:");
            for (i, d) in rel.iter().enumerate() {
                println!("  osc {i}: {:+.1}%", 100.0 * d);
            }
            to_json(&Comparison {
                method1: m1,
                method2: m2,
                relative_difference: rel,
            })
        }
    };
    println!("{out}");
    if let Some(path) = json {
        write_file(path, out.as_bytes())?;
    }
    Ok(())
}

pub fn diagnose(levels: &[f64], f_ratio: f64, out_dir: &Path, density_levels: &[f64], points: usize) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let sweep = discrepancy_sweep(levels, f_ratio)?;
    let mut buf = Vec::new();
    write_discrepancy_csv(&mut buf, &sweep).expect("in-memory write");
    let sweep_path = out_dir.join("jitter_discrepancy.csv");
    write_file(&sweep_path, &buf)?;
    println!("jitter level  TV(NIG, normal)");
    for p in &sweep {
        println!("{:<13e} {:.4e}", p.jitter_level, p.tv_distance);
    }
    if sweep.len() >= 2 {
        println!("log-log slope of TV against jitter level: {:.4}", log_log_slope(&sweep)?);
    }
    println!("wrote {}", sweep_path.display());
    for &level in density_levels {
        let rows = density_comparison(level, f_ratio, points, 5.0)?;
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &rows).expect("in-memory write");
        let path = out_dir.join(format!("discrepancy_{level:.3}.csv"));
        write_file(&path, &buf)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
