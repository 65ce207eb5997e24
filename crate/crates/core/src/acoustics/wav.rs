//! Mono WAV persistence plus the plain-text IR metadata sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{ImpulseResponse, Signal};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

pub fn write_signal(path: impl AsRef<Path>, signal: &Signal, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut w = WavWriter::create(path, spec)?;
    match format {
        WavFormat::Pcm16 => {
            for &v in signal.samples() {
                let q = (v.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
                w.write_sample(q)?;
            }
        }
        WavFormat::Float32 => {
            for &v in signal.samples() {
                w.write_sample(v as f32)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn read_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "expected mono WAV, got {} channels",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => r
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / i16::MAX as f64))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => r
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (f, b) => {
            return Err(Error::Format(format!(
                "unsupported WAV encoding {f:?}/{b} bit"
            )));
        }
    };
    Signal::new(samples, spec.sample_rate)
}

pub fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("meta")
}

/// Writes the IR as 32-bit float WAV and a `key=value` sidecar next to it.
pub fn write_ir(path: impl AsRef<Path>, ir: &ImpulseResponse) -> Result<()> {
    let path = path.as_ref();
    write_signal(path, ir.signal(), WavFormat::Float32)?;
    let t60 = ir
        .t60_estimate
        .map(|t| format!("{t}"))
        .unwrap_or_else(|| "none".into());
    let meta = format!(
        "t60_estimate={t60}\ndirect_path_index={}\nsample_rate={}\n",
        ir.direct_path_index(),
        ir.sample_rate()
    );
    fs::write(sidecar_path(path), meta)?;
    Ok(())
}

pub fn read_ir(path: impl AsRef<Path>) -> Result<ImpulseResponse> {
    let path = path.as_ref();
    let signal = read_signal(path)?;
    let text = fs::read_to_string(sidecar_path(path))?;
    let meta: BTreeMap<&str, &str> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    let get = |k: &str| {
        meta.get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("IR sidecar missing key {k}")))
    };
    let direct: usize = get("direct_path_index")?
        .parse()
        .map_err(|_| Error::Format("bad direct_path_index".into()))?;
    let rate: u32 = get("sample_rate")?
        .parse()
        .map_err(|_| Error::Format("bad sample_rate".into()))?;
    if rate != signal.sample_rate() {
        return Err(Error::SampleRateMismatch(rate, signal.sample_rate()));
    }
    let mut ir = ImpulseResponse::with_direct_path(signal, direct)?;
    ir.t60_estimate = match get("t60_estimate")? {
        "none" => None,
        v => Some(
            v.parse()
                .map_err(|_| Error::Format("bad t60_estimate".into()))?,
        ),
    };
    Ok(ir)
}
