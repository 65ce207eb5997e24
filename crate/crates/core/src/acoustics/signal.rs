use crate::error::{invalid, Error, Result};

/// Uniformly sampled real-valued waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return invalid("sample rate must be positive");
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite sample at index {i}"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    /// Unit impulse of length `len` at index `at`.
    pub fn impulse(len: usize, at: usize, sample_rate: u32) -> Result<Self> {
        if at >= len {
            return invalid(format!("impulse index {at} outside length {len}"));
        }
        let mut samples = vec![0.0; len];
        samples[at] = 1.0;
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy truncated or zero-padded to exactly `len` samples.
    pub fn resized(&self, len: usize) -> Signal {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Signal {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Signal {
        Signal {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn check_rate(&self, other: &Signal) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch(
                self.sample_rate,
                other.sample_rate,
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(Signal::new(vec![0.0], 0).is_err());
        assert!(Signal::new(vec![0.0, f64::NAN], 16000).is_err());
        assert!(Signal::new(vec![f64::INFINITY], 16000).is_err());
        assert!(Signal::impulse(4, 4, 16000).is_err());
    }

    #[test]
    fn resize_pads_and_truncates() {
        let s = Signal::new(vec![1.0, 2.0, 3.0], 8000).unwrap();
        assert_eq!(s.resized(5).samples(), &[1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(s.resized(2).samples(), &[1.0, 2.0]);
        assert!((s.duration() - 3.0 / 8000.0).abs() < 1e-15);
    }
}
