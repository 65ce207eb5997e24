use std::f64::consts::PI;

use ndarray::{concatenate, Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FeatureConfig, FeatureKind, FrameMatrix};
use crate::acoustics::Signal;
use crate::error::{invalid, Error, Result};

const LOG_FLOOR: f64 = 1e-10;
const MEL_LOW_HZ: f64 = 20.0;

/// `floor((n - frame) / hop) + 1`, or `None` when shorter than one frame.
pub fn frame_count(n_samples: usize, frame: usize, hop: usize) -> Option<usize> {
    (n_samples >= frame && frame > 0 && hop > 0).then(|| (n_samples - frame) / hop + 1)
}

/// Hamming-windowed frames, one per row.
pub fn frame_signal(x: &Signal, cfg: &FeatureConfig) -> Result<Array2<f64>> {
    let fs = x.sample_rate();
    cfg.validate(fs)?;
    let (l, h) = (cfg.frame_len(fs), cfg.hop_len(fs));
    let n_fr = frame_count(x.len(), l, h).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "signal of {} samples shorter than one {l}-sample frame",
            x.len()
        ))
    })?;
    let window = hamming(l);
    let s = x.samples();
    Ok(Array2::from_shape_fn((n_fr, l), |(k, i)| {
        s[k * h + i] * window[i]
    }))
}

fn hamming(l: usize) -> Vec<f64> {
    if l == 1 {
        return vec![1.0];
    }
    (0..l)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (l - 1) as f64).cos())
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// HTK-style triangular filters from 20 Hz to Nyquist over the
/// `fft_size/2 + 1` power-spectrum bins; shape `n_mels x n_bins`.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, fs: u32) -> Array2<f64> {
    let n_bins = fft_size / 2 + 1;
    let nyquist = fs as f64 / 2.0;
    let (lo, hi) = (hz_to_mel(MEL_LOW_HZ), hz_to_mel(nyquist));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    Array2::from_shape_fn((n_mels, n_bins), |(m, k)| {
        let f = k as f64 * fs as f64 / fft_size as f64;
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        if f <= left || f >= right {
            0.0
        } else if f <= center {
            (f - left) / (center - left)
        } else {
            (right - f) / (right - center)
        }
    })
}

/// Orthonormal DCT-II rows `0..n_out` for inputs of length `n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_out, n_in), |(i, m)| {
        let scale = if i == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        scale * (PI * i as f64 * (m as f64 + 0.5) / n_in as f64).cos()
    })
}

/// FBANK or MFCC features (plus deltas per `delta_order`).
pub fn extract_features(x: &Signal, cfg: &FeatureConfig) -> Result<FrameMatrix> {
    let fs = x.sample_rate();
    let frames = frame_signal(x, cfg)?;
    let n_fft = cfg.fft_len(fs);
    let n_bins = n_fft / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut power = Array2::<f64>::zeros((frames.nrows(), n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for (frame, mut out) in frames.outer_iter().zip(power.outer_iter_mut()) {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (c, &v) in buf.iter_mut().zip(frame.iter()) {
            c.re = v;
        }
        fft.process(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.norm_sqr();
        }
    }

    let fb = mel_filterbank(cfg.n_mels, n_fft, fs);
    let logmel = power.dot(&fb.t()).mapv(|e| e.max(LOG_FLOOR).ln());
    let statics = match cfg.kind {
        FeatureKind::Fbank => logmel,
        FeatureKind::Mfcc => logmel.dot(&dct_matrix(cfg.n_cepstra, cfg.n_mels).t()),
    };

    let data = match cfg.delta_order {
        0 => statics,
        1 => {
            let d = compute_deltas(&statics, 2)?;
            concatenate![Axis(1), statics, d]
        }
        _ => {
            let d = compute_deltas(&statics, 2)?;
            let dd = compute_deltas(&d, 2)?;
            concatenate![Axis(1), statics, d, dd]
        }
    };
    if data.iter().any(|v| !v.is_finite()) {
        return invalid("non-finite feature value");
    }

    let (l, h) = (cfg.frame_len(fs), cfg.hop_len(fs));
    let frame_times = (0..data.nrows())
        .map(|k| (k * h) as f64 / fs as f64 + l as f64 / (2.0 * fs as f64))
        .collect();
    Ok(FrameMatrix {
        data,
        labels: None,
        frame_times,
    })
}

/// Regression deltas over `+-k` frames with boundary-frame replication.
pub fn compute_deltas(m: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    if k == 0 {
        return invalid("delta window must be at least 1");
    }
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Empty("feature matrix"));
    }
    let denom = 2.0 * (1..=k).map(|i| (i * i) as f64).sum::<f64>();
    let mut out = Array2::<f64>::zeros(m.raw_dim());
    for t in 0..n {
        let mut row = out.row_mut(t);
        for i in 1..=k {
            let fwd = m.row((t + i).min(n - 1));
            let back = m.row(t.saturating_sub(i));
            row.scaled_add(i as f64 / denom, &(&fwd - &back));
        }
    }
    Ok(out)
}
