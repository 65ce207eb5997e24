use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::dsp::to_complex;
use super::Signal;
use crate::error::{invalid, Error, Result};

/// Real series indexed by integer lag in `[-max_lag, +max_lag]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    values: Vec<f64>,
    max_lag: usize,
}

impl CorrelationSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return invalid(format!(
                "correlation series needs odd length, got {}",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite correlation value");
        }
        let max_lag = values.len() / 2;
        Ok(Self { values, max_lag })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn center_index(&self) -> usize {
        self.max_lag
    }

    /// Value at signed lag `n`.
    pub fn at(&self, lag: i64) -> f64 {
        self.values[(lag + self.max_lag as i64) as usize]
    }

    pub fn lags(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let l = self.max_lag as i64;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (i as i64 - l, *v))
    }
}

/// Cross-correlation `R_xy[n] = sum_k x[k] y[k+n]` for `|n| <= max_lag`,
/// without normalization.
pub fn xcorr(x: &Signal, y: &Signal, max_lag: usize) -> Result<CorrelationSeries> {
    x.check_rate(y)?;
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("correlation input"));
    }
    let shorter = x.len().min(y.len());
    if max_lag >= shorter {
        return invalid(format!(
            "max_lag {max_lag} must be below the shorter signal length {shorter}"
        ));
    }
    let work = (x.len() + y.len()) * (2 * max_lag + 1);
    let values = if work <= 1 << 16 {
        xcorr_direct(x.samples(), y.samples(), max_lag)
    } else {
        Correlator::new(x.len(), y.len()).run(x.samples(), y.samples(), max_lag)
    };
    CorrelationSeries::new(values)
}

/// Reference direct summation of the cross-correlation.
pub fn xcorr_direct(x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
    let l = max_lag as i64;
    (-l..=l)
        .map(|n| {
            x.iter()
                .enumerate()
                .filter_map(|(k, xv)| {
                    let j = k as i64 + n;
                    (j >= 0 && (j as usize) < y.len()).then(|| xv * y[j as usize])
                })
                .sum()
        })
        .collect()
}

/// FFT cross-correlator with cached plans for fixed input lengths.
struct Correlator {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Correlator {
    fn new(len_x: usize, len_y: usize) -> Self {
        let n = (len_x + len_y - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
        let mut fx = to_complex(x, self.n);
        let mut fy = to_complex(y, self.n);
        self.fwd.process(&mut fx);
        self.fwd.process(&mut fy);
        // conj(X) * Y puts lag n at circular index n
        let mut prod: Vec<Complex<f64>> = fx.iter().zip(&fy).map(|(a, b)| a.conj() * b).collect();
        self.inv.process(&mut prod);
        let scale = 1.0 / self.n as f64;
        let l = max_lag as i64;
        (-l..=l)
            .map(|lag| {
                let idx = lag.rem_euclid(self.n as i64) as usize;
                prod[idx].re * scale
            })
            .collect()
    }
}

/// Mean of `|R_xy|` over sliding windows of every clean/reverberant pair.
/// Windows never cross utterance boundaries; each spans `window_ms`, and the
/// lag range is `+-window_ms/2`.
pub fn avg_xcorr_envelope(
    corpus_clean: &[Signal],
    corpus_rev: &[Signal],
    window_ms: f64,
    hop_ms: f64,
) -> Result<CorrelationSeries> {
    if corpus_clean.is_empty() {
        return Err(Error::Empty("clean corpus"));
    }
    if corpus_clean.len() != corpus_rev.len() {
        return invalid(format!(
            "unpaired corpora: {} clean vs {} reverberant",
            corpus_clean.len(),
            corpus_rev.len()
        ));
    }
    if !(window_ms > 0.0) || !(hop_ms > 0.0) {
        return invalid("window and hop must be positive");
    }
    let fs = corpus_clean[0].sample_rate();
    let win = (window_ms * fs as f64 / 1000.0).round() as usize;
    let hop = ((hop_ms * fs as f64 / 1000.0).round() as usize).max(1);
    let max_lag = win / 2;
    if win < 2 {
        return invalid("window shorter than two samples");
    }
    let correlator = Correlator::new(win, win);
    let mut acc = vec![0.0; 2 * max_lag + 1];
    let mut count = 0usize;
    for (x, y) in corpus_clean.iter().zip(corpus_rev) {
        x.check_rate(y)?;
        if x.sample_rate() != fs {
            return Err(Error::SampleRateMismatch(fs, x.sample_rate()));
        }
        let len = x.len().min(y.len());
        let mut start = 0;
        while start + win <= len {
            let r = correlator.run(
                &x.samples()[start..start + win],
                &y.samples()[start..start + win],
                max_lag,
            );
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v.abs();
            }
            count += 1;
            start += hop;
        }
    }
    if count == 0 {
        return Err(Error::Empty("no complete analysis window in corpus"));
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    CorrelationSeries::new(acc)
}

/// `sum_{n>0} c[n]^2 / sum_{n<0} c[n]^2`; above 1 means future-heavy.
pub fn side_energy_ratio(c: &CorrelationSeries) -> Result<f64> {
    let m = c.center_index();
    let past: f64 = c.values()[..m].iter().map(|v| v * v).sum();
    let future: f64 = c.values()[m + 1..].iter().map(|v| v * v).sum();
    if past == 0.0 {
        return Err(Error::ZeroEnergy("past side of correlation series"));
    }
    Ok(future / past)
}

/// Smallest lag (in ms) whose symmetric span `[-lag, lag]` holds
/// `energy_fraction` of the autocorrelation energy.
pub fn autocorr_effective_length(x: &Signal, energy_fraction: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("signal"));
    }
    if !(energy_fraction > 0.0 && energy_fraction < 1.0) {
        return invalid(format!("energy fraction {energy_fraction} outside (0, 1)"));
    }
    let n = x.len();
    let r = if n < 256 {
        xcorr_direct(x.samples(), x.samples(), n - 1)
    } else {
        Correlator::new(n, n).run(x.samples(), x.samples(), n - 1)
    };
    // r[n - 1] is lag 0; the series is even
    let center = n - 1;
    let total: f64 = r.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::ZeroEnergy("signal"));
    }
    let target = energy_fraction * total;
    let mut acc = r[center] * r[center];
    let mut lag = 0;
    while acc < target && lag < center {
        lag += 1;
        acc += r[center - lag].powi(2) + r[center + lag].powi(2);
    }
    Ok(lag as f64 * 1000.0 / x.sample_rate() as f64)
}
