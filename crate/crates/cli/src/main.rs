use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod hardware;

#[derive(Debug, Parser)]
#[command(name = "jitter", version, about = "Simulate EO-TRNGs, measure differential jitter and recover individual oscillator volatilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    BitMle,
    PhaseOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecoverArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every configured pair and write packed bits plus metadata.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Defaults to `output.dir` of the config, then the current directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write ground-truth phases as little-endian f64.
        #[arg(long)]
        write_phases: bool,
        /// Also write `index,bit` CSV files.
        #[arg(long)]
        csv: bool,
    },
    /// Estimate frequency ratio and accumulated composed jitter per stream.
    Measure {
        /// Packed bit files; metadata is read from the sibling `.json`.
        #[arg(long, num_args = 1.., conflicts_with = "config")]
        bits: Vec<PathBuf>,
        /// Simulate in memory from a config instead of reading files.
        #[arg(long, requires = "seed")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "bit-mle")]
        method: MethodArg,
        /// Delay elements `sampler,sampled`, resolving the ratio branch.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        delay_elements: Option<Vec<u32>>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recover individual volatilities from measurement records.
    Recover {
        /// Records as a JSON array or CSV with header.
        #[arg(long)]
        records: PathBuf,
        /// Frequency ratios `f_i/f_0`, comma separated, starting with 1.
        #[arg(long, value_delimiter = ',', conflicts_with = "periods")]
        ratios: Option<Vec<f64>>,
        /// Mean periods in seconds, comma separated.
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "2")]
        method: RecoverArg,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Normal-approximation diagnostics: TV sweep and density comparisons.
    Diagnose {
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.002,0.005,0.01,0.02,0.05,0.1")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        f_ratio: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.05,0.1")]
        density_levels: Vec<f64>,
        #[arg(long, default_value_t = 401)]
        density_points: usize,
    },
    /// Recompute the FPGA experiments' individual jitters with both methods
    /// and set them beside the published figures (a report, not a check).
    HardwareReport {
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            out_dir,
            write_phases,
            csv,
        } => commands::simulate(&config, seed, out_dir, write_phases, csv),
        Command::Measure {
            bits,
            config,
            seed,
            method,
            delay_elements,
            json,
            csv,
        } => commands::measure(
            &bits,
            config.as_deref(),
            seed,
            method,
            delay_elements.map(|v| (v[0], v[1])),
            json.as_deref(),
            csv.as_deref(),
        ),
        Command::Recover {
            records,
            ratios,
            periods,
            method,
            json,
        } => commands::recover(&records, ratios, periods, method, json.as_deref()),
        Command::Diagnose {
            levels,
            f_ratio,
            out_dir,
            density_levels,
            density_points,
        } => commands::diagnose(&levels, f_ratio, &out_dir, &density_levels, density_points),
        Command::HardwareReport { json } => hardware::report(json.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
