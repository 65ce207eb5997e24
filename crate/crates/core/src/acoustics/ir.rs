use rand_distr::{Distribution, StandardNormal};

use super::Signal;
use crate::error::{invalid, Error, Result};
use crate::rng;

/// ln(1000): an amplitude envelope `exp(-DECAY_60DB * t / T60)` is 60 dB
/// down at `t = T60`.
pub const DECAY_60DB: f64 = 6.907_755_278_982_137;

/// Standard deviation of the noise tail relative to the unit direct path.
/// At 16 kHz this puts the direct-to-reverberant ratio near +4 dB for a
/// 0.78 s tail.
pub const EXP_TAIL_STD: f64 = 0.02;

const CAUSAL_TOL: f64 = 1e-12;

/// Causal FIR room model.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    signal: Signal,
    direct_path_index: usize,
    pub t60_estimate: Option<f64>,
}

impl ImpulseResponse {
    /// Wraps raw taps; the direct path is the first tap above 1e-12.
    pub fn from_samples(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let signal = Signal::new(samples, sample_rate)?;
        let direct = signal
            .samples()
            .iter()
            .position(|v| v.abs() > CAUSAL_TOL)
            .unwrap_or(0);
        Ok(Self {
            signal,
            direct_path_index: direct,
            t60_estimate: None,
        })
    }

    pub fn with_direct_path(signal: Signal, direct_path_index: usize) -> Result<Self> {
        if signal.is_empty() {
            return Err(Error::Empty("impulse response"));
        }
        if direct_path_index >= signal.len() {
            return invalid(format!(
                "direct path index {direct_path_index} beyond IR length {}",
                signal.len()
            ));
        }
        if signal.samples()[..direct_path_index]
            .iter()
            .any(|v| v.abs() > CAUSAL_TOL)
        {
            return invalid("non-causal impulse response: energy before the direct path");
        }
        Ok(Self {
            signal,
            direct_path_index,
            t60_estimate: None,
        })
    }

    /// Single unit tap at index 0.
    pub fn identity(sample_rate: u32) -> Self {
        Self {
            signal: Signal::new(vec![1.0], sample_rate).expect("valid"),
            direct_path_index: 0,
            t60_estimate: Some(0.0),
        }
    }

    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    pub fn samples(&self) -> &[f64] {
        self.signal.samples()
    }

    pub fn sample_rate(&self) -> u32 {
        self.signal.sample_rate()
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    pub fn direct_path_index(&self) -> usize {
        self.direct_path_index
    }

    /// Fills `t60_estimate` from the Schroeder decay if possible.
    pub fn with_estimated_t60(mut self) -> Self {
        self.t60_estimate = schroeder_t60(&self).ok();
        self
    }
}

/// Synthetic IR: unit direct path at index 0 followed by Gaussian noise
/// under the envelope `exp(-6.908 t / T60)`.
pub fn exp_decay_ir(t60: f64, fs: u32, length: f64, seed: u64) -> Result<ImpulseResponse> {
    exp_decay_ir_with_level(t60, fs, length, EXP_TAIL_STD, seed)
}

/// [`exp_decay_ir`] with an explicit tail standard deviation.
pub fn exp_decay_ir_with_level(
    t60: f64,
    fs: u32,
    length: f64,
    tail_std: f64,
    seed: u64,
) -> Result<ImpulseResponse> {
    if !(tail_std > 0.0) || !tail_std.is_finite() {
        return invalid(format!("tail level must be positive, got {tail_std}"));
    }
    if !(t60 > 0.0) || !t60.is_finite() {
        return invalid(format!("t60 must be positive, got {t60}"));
    }
    if fs == 0 {
        return invalid("sample rate must be positive");
    }
    if !(length >= t60) {
        return invalid(format!("IR length {length} s shorter than t60 {t60} s"));
    }
    let n = (length * fs as f64).round() as usize;
    let mut rng = rng::seeded(seed);
    let rate = DECAY_60DB / (t60 * fs as f64);
    let mut samples = Vec::with_capacity(n);
    samples.push(1.0);
    for i in 1..n {
        let g: f64 = StandardNormal.sample(&mut rng);
        samples.push(tail_std * g * (-rate * i as f64).exp());
    }
    let signal = Signal::new(samples, fs)?;
    let mut ir = ImpulseResponse::with_direct_path(signal, 0)?;
    ir.t60_estimate = schroeder_t60(&ir).ok();
    Ok(ir)
}

/// T60 from the backward-integrated energy decay curve: least-squares line
/// over the -5 dB .. -25 dB span, extrapolated to -60 dB.
pub fn schroeder_t60(h: &ImpulseResponse) -> Result<f64> {
    let x = h.samples();
    let mut edc = vec![0.0; x.len()];
    let mut acc = 0.0;
    for i in (0..x.len()).rev() {
        acc += x[i] * x[i];
        edc[i] = acc;
    }
    let total = acc;
    if total <= 0.0 {
        return Err(Error::ZeroEnergy("impulse response"));
    }
    let db: Vec<f64> = edc
        .iter()
        .take_while(|&&e| e > 0.0)
        .map(|e| 10.0 * (e / total).log10())
        .collect();
    let start = db.iter().position(|&d| d <= -5.0);
    let end = db.iter().position(|&d| d <= -25.0);
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) if e >= s + 2 => (s, e),
        _ => return Err(Error::DecayRangeNotReached),
    };

    let fs = h.sample_rate() as f64;
    let n = (end - start + 1) as f64;
    let (mut st, mut sd) = (0.0, 0.0);
    for (i, d) in db.iter().enumerate().take(end + 1).skip(start) {
        st += i as f64 / fs;
        sd += d;
    }
    let (mt, md) = (st / n, sd / n);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, d) in db.iter().enumerate().take(end + 1).skip(start) {
        let dt = i as f64 / fs - mt;
        num += dt * (d - md);
        den += dt * dt;
    }
    let slope = num / den;
    if !(slope < 0.0) {
        return Err(Error::DecayRangeNotReached);
    }
    Ok(-60.0 / slope)
}
