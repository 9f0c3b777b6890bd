//! On-disk forms of simulated bit streams.
//!
//! Bits are packed most-significant-bit first, eight per byte, and the last
//! byte is zero-padded; the bit count travels in the metadata. Recorded
//! phases are raw little-endian `f64`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::simulator::{BitStream, SimulationMode};

/// Sidecar describing a packed bit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub n_bits: usize,
    /// `(sampler, sampled)`
    pub pair: (usize, usize),
    /// Mean period of the sampler in seconds.
    pub sampler_period: f64,
    /// Duty cycle of the sampled oscillator.
    pub duty_cycle: f64,
    #[serde(default)]
    pub mode: Option<SimulationMode>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Configured `f_sampled / f_sampler`, used only to pick the branch of a
    /// measured ratio.
    #[serde(default)]
    pub nominal_ratio: Option<f64>,
    /// Delay elements `(sampler, sampled)` when known.
    #[serde(default)]
    pub delay_elements: Option<(u32, u32)>,
}

impl StreamMetadata {
    pub fn of_stream(stream: &BitStream) -> Self {
        Self {
            n_bits: stream.len(),
            pair: stream.pair,
            sampler_period: stream.sampler_period,
            duty_cycle: stream.duty_cycle,
            mode: Some(stream.mode),
            seed: Some(stream.seed),
            nominal_ratio: None,
            delay_elements: None,
        }
    }
}

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b != 0 {
            out[k / 8] |= 0x80 >> (k % 8);
        }
    }
    out
}

/// Inverse of [`pack_bits`]; `n_bits` must fit in `bytes` and padding bits
/// must be zero.
pub fn unpack_bits(bytes: &[u8], n_bits: usize) -> Result<Vec<u8>> {
    if bytes.len() != n_bits.div_ceil(8) {
        return Err(invalid(
            "bits",
            format!("{} bytes cannot hold exactly {n_bits} bits", bytes.len()),
        ));
    }
    let bits: Vec<u8> = (0..n_bits).map(|k| (bytes[k / 8] >> (7 - k % 8)) & 1).collect();
    if n_bits % 8 != 0 {
        let pad_mask = 0xFFu8 >> (n_bits % 8);
        if bytes[bytes.len() - 1] & pad_mask != 0 {
            return Err(invalid("bits", "padding bits of the last byte are not zero"));
        }
    }
    Ok(bits)
}

/// `index,bit` rows with a header.
pub fn write_bits_csv<W: Write>(mut out: W, bits: &[u8]) -> io::Result<()> {
    writeln!(out, "index,bit")?;
    for (k, b) in bits.iter().enumerate() {
        writeln!(out, "{k},{b}")?;
    }
    Ok(())
}

pub fn write_phases<W: Write>(mut out: W, phases: &[f64]) -> io::Result<()> {
    for p in phases {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_phases<R: Read>(mut input: R) -> io::Result<Vec<f64>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() % 8 != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "phase file length is not a multiple of 8"));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Rebuilds a stream from packed bytes, metadata and optional phases.
pub fn stream_from_parts(bytes: &[u8], meta: &StreamMetadata, phases: Option<Vec<f64>>) -> Result<BitStream> {
    let bits = unpack_bits(bytes, meta.n_bits)?;
    let mut stream = BitStream::from_bits(bits, meta.pair, meta.sampler_period, meta.duty_cycle);
    if let Some(mode) = meta.mode {
        stream.mode = mode;
    }
    if let Some(seed) = meta.seed {
        stream.seed = seed;
    }
    if let Some(p) = &phases {
        if p.len() != meta.n_bits {
            return Err(invalid("phases", format!("{} phases for {} bits", p.len(), meta.n_bits)));
        }
    }
    stream.ground_truth_phases = phases;
    Ok(stream)
}
