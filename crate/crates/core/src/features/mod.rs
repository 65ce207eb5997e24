//! Framed feature matrices and (a)symmetric context windows.

mod context;
mod extract;
pub mod io;
mod normalize;

use std::fmt;

use ndarray::Array2;

use crate::error::{invalid, Result};

pub use context::{assemble_context, assemble_set, pearson_lag_profile, rho_cw};
pub use extract::{compute_deltas, extract_features, frame_count, frame_signal, mel_filterbank};
pub use normalize::{apply_normalizer, fit_normalizer, fit_normalizer_set, NormStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Fbank,
    Mfcc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_cepstra: usize,
    pub kind: FeatureKind,
    /// 0: statics only, 1: +delta, 2: +delta+delta-delta.
    pub delta_order: usize,
    /// `None` picks the next power of two above the frame length.
    pub fft_size: Option<usize>,
}

impl FeatureConfig {
    /// 13 cepstra with deltas and accelerations: 39 features per frame.
    pub fn mfcc() -> Self {
        Self {
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 40,
            n_cepstra: 13,
            kind: FeatureKind::Mfcc,
            delta_order: 2,
            fft_size: None,
        }
    }

    /// 40 log-mel energies.
    pub fn fbank() -> Self {
        Self {
            kind: FeatureKind::Fbank,
            delta_order: 0,
            ..Self::mfcc()
        }
    }

    pub fn frame_len(&self, fs: u32) -> usize {
        (self.frame_len_ms * fs as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self, fs: u32) -> usize {
        (self.hop_ms * fs as f64 / 1000.0).round() as usize
    }

    pub fn fft_len(&self, fs: u32) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.frame_len(fs).next_power_of_two())
    }

    /// Features per frame.
    pub fn dim(&self) -> usize {
        let base = match self.kind {
            FeatureKind::Fbank => self.n_mels,
            FeatureKind::Mfcc => self.n_cepstra,
        };
        base * (1 + self.delta_order)
    }

    pub fn validate(&self, fs: u32) -> Result<()> {
        if !(self.frame_len_ms > 0.0) || !(self.hop_ms > 0.0) {
            return invalid("frame and hop lengths must be positive");
        }
        if self.hop_ms > self.frame_len_ms {
            return invalid("hop longer than frame");
        }
        if self.n_mels == 0 || self.n_cepstra == 0 || self.n_cepstra > self.n_mels {
            return invalid("need 0 < n_cepstra <= n_mels");
        }
        if self.delta_order > 2 {
            return invalid("delta_order must be 0, 1 or 2");
        }
        let (l, h) = (self.frame_len(fs), self.hop_len(fs));
        if l == 0 || h == 0 {
            return invalid("frame or hop shorter than one sample");
        }
        let n = self.fft_len(fs);
        if !n.is_power_of_two() || n < l {
            return invalid(format!("fft_size {n} must be a power of two >= {l}"));
        }
        Ok(())
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::mfcc()
    }
}

/// `N_fr x N_fea` feature sequence with optional per-frame class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub data: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    /// Frame centers in seconds.
    pub frame_times: Vec<f64>,
}

impl FrameMatrix {
    pub fn new(data: Array2<f64>) -> Self {
        let frame_times = (0..data.nrows()).map(|i| i as f64).collect();
        Self {
            data,
            labels: None,
            frame_times,
        }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_frames() {
            return invalid(format!(
                "{} labels for {} frames",
                labels.len(),
                self.n_frames()
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    /// Keeps the first `n` frames.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.n_frames() {
            return;
        }
        self.data = self.data.slice(ndarray::s![..n, ..]).to_owned();
        self.frame_times.truncate(n);
        if let Some(l) = &mut self.labels {
            l.truncate(n);
        }
    }
}

/// `N_p` past and `N_f` future frames around the current one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextWindowSpec {
    pub n_past: usize,
    pub n_future: usize,
}

impl ContextWindowSpec {
    pub fn new(n_past: usize, n_future: usize) -> Self {
        Self { n_past, n_future }
    }

    pub fn symmetric(half: usize) -> Self {
        Self::new(half, half)
    }

    pub fn len(&self) -> usize {
        self.n_past + 1 + self.n_future
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_past == self.n_future
    }

    /// Offsets `-N_p ..= N_f` in the order they are concatenated.
    pub fn offsets(&self) -> impl Iterator<Item = i64> {
        -(self.n_past as i64)..=self.n_future as i64
    }
}

/// `a-1-b` notation.
impl fmt::Display for ContextWindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-1-{}", self.n_past, self.n_future)
    }
}

impl std::str::FromStr for ContextWindowSpec {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        match parts.as_slice() {
            [p, "1", f] => match (p.parse(), f.parse()) {
                (Ok(p), Ok(f)) => Ok(Self::new(p, f)),
                _ => invalid(format!("bad context window '{s}'")),
            },
            _ => invalid(format!("context window must look like a-1-b, got '{s}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dims() {
        assert_eq!(FeatureConfig::mfcc().dim(), 39);
        assert_eq!(FeatureConfig::fbank().dim(), 40);
        assert_eq!(FeatureConfig::mfcc().fft_len(16000), 512);
    }

    #[test]
    fn config_validation() {
        let mut c = FeatureConfig::mfcc();
        assert!(c.validate(16000).is_ok());
        c.hop_ms = 30.0;
        assert!(c.validate(16000).is_err());
        let mut c = FeatureConfig::mfcc();
        c.n_cepstra = 41;
        assert!(c.validate(16000).is_err());
        let mut c = FeatureConfig::mfcc();
        c.fft_size = Some(256);
        assert!(c.validate(16000).is_err());
    }

    #[test]
    fn window_notation() {
        let w = ContextWindowSpec::new(11, 7);
        assert_eq!(w.to_string(), "11-1-7");
        assert_eq!(w.len(), 19);
        assert_eq!("11-1-7".parse::<ContextWindowSpec>().unwrap(), w);
        assert!("11-2-7".parse::<ContextWindowSpec>().is_err());
        assert_eq!(w.offsets().count(), 19);
    }
}
