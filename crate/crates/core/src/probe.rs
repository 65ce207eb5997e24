//! Per-offset input-gradient norm profiles.
//!
//! For every minibatch the input gradient of the summed cross-entropy is
//! split into one block of `N_fea` coordinates per context offset `p`; the
//! profile value at `p` is the Euclidean norm of that block, averaged over
//! all minibatches.

use std::fmt::Write as _;

use ndarray::{s, ArrayView2, Axis};

use crate::error::{invalid, Error, Result};
use crate::features::ContextWindowSpec;
use crate::nn::{backward, MlpModel};

/// How per-minibatch gradients are reduced before the norm is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeReduction {
    /// Norm of the minibatch-summed gradient, averaged over minibatches.
    #[default]
    MinibatchSum,
    /// Mean over all examples of the per-example gradient norm.
    PerExample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientProfile {
    cw_max: usize,
    norms: Vec<f64>,
    pub n_minibatches: usize,
}

impl GradientProfile {
    /// `norms[i]` belongs to offset `i - (cw_max - 1) / 2`.
    pub fn new(norms: Vec<f64>, n_minibatches: usize) -> Result<Self> {
        if norms.len().is_multiple_of(2) {
            return invalid("gradient profile needs an odd number of offsets");
        }
        if norms.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("gradient norms must be finite and non-negative");
        }
        Ok(Self {
            cw_max: norms.len(),
            norms,
            n_minibatches,
        })
    }

    /// Builds a profile from `(offset, norm)` pairs covering `-h..=h`.
    pub fn from_pairs(pairs: &[(i64, f64)]) -> Result<Self> {
        let mut sorted = pairs.to_vec();
        sorted.sort_by_key(|(p, _)| *p);
        let h = sorted.len() as i64 / 2;
        if sorted
            .iter()
            .enumerate()
            .any(|(i, (p, _))| *p != i as i64 - h)
        {
            return invalid("profile offsets must cover a symmetric contiguous range");
        }
        Self::new(sorted.into_iter().map(|(_, v)| v).collect(), 1)
    }

    pub fn cw_max(&self) -> usize {
        self.cw_max
    }

    pub fn half(&self) -> usize {
        (self.cw_max - 1) / 2
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Norm at offset `p`, `None` outside the probed range.
    pub fn norm(&self, p: i64) -> Option<f64> {
        let idx = p + self.half() as i64;
        (idx >= 0 && (idx as usize) < self.cw_max).then(|| self.norms[idx as usize])
    }

    pub fn offsets(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let h = self.half() as i64;
        self.norms
            .iter()
            .enumerate()
            .map(move |(i, v)| (i as i64 - h, *v))
    }

    /// `sum_{p<0} |g_p| / sum_{p>0} |g_p|`.
    pub fn past_future_ratio(&self) -> Result<f64> {
        let h = self.half();
        let past: f64 = self.norms[..h].iter().sum();
        let future: f64 = self.norms[h + 1..].iter().sum();
        if future == 0.0 {
            return Err(Error::ZeroEnergy("future side of gradient profile"));
        }
        Ok(past / future)
    }

    /// Mirror image `p -> -p`.
    pub fn mirrored(&self) -> Self {
        let mut norms = self.norms.clone();
        norms.reverse();
        Self { norms, ..*self }
    }

    /// `p,norm` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,norm\n");
        for (p, v) in self.offsets() {
            let _ = writeln!(s, "{p},{v:.9e}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let (p, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad profile row '{line}'")))?;
            let p: i64 = p
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad offset '{p}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad norm '{v}'")))?;
            pairs.push((p, v));
        }
        Self::from_pairs(&pairs)
    }
}

/// Computes the gradient profile of `model` on context-assembled data.
/// Minibatches are consecutive blocks of `batch_size` rows in data order.
pub fn gradient_profile(
    model: &MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    spec: ContextWindowSpec,
    batch_size: usize,
) -> Result<GradientProfile> {
    gradient_profile_with(
        model,
        x,
        labels,
        spec,
        batch_size,
        ProbeReduction::MinibatchSum,
    )
}

pub fn gradient_profile_with(
    model: &MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    spec: ContextWindowSpec,
    batch_size: usize,
    reduction: ProbeReduction,
) -> Result<GradientProfile> {
    if !spec.is_symmetric() {
        return invalid(format!("probe window {spec} is not symmetric"));
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("probe data"));
    }
    if batch_size == 0 {
        return invalid("batch size must be at least 1");
    }
    let width = spec.len();
    if !x.ncols().is_multiple_of(width) || x.ncols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} columns, model expects {}, window has {width} frames",
            x.ncols(),
            model.input_dim()
        )));
    }
    let n_fea = x.ncols() / width;
    if labels.len() != x.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }

    let mut sums = vec![Kahan::default(); width];
    let mut count = 0usize;
    for (bx, by) in x
        .axis_chunks_iter(Axis(0), batch_size)
        .zip(labels.chunks(batch_size))
    {
        let (_, gx) = backward(model, bx, by)?;
        match reduction {
            ProbeReduction::MinibatchSum => {
                let total = gx.sum_axis(Axis(0));
                for (slot, acc) in sums.iter_mut().enumerate() {
                    let block = total.slice(s![slot * n_fea..(slot + 1) * n_fea]);
                    acc.add(block.dot(&block).sqrt());
                }
                count += 1;
            }
            ProbeReduction::PerExample => {
                for row in gx.outer_iter() {
                    for (slot, acc) in sums.iter_mut().enumerate() {
                        let block = row.slice(s![slot * n_fea..(slot + 1) * n_fea]);
                        acc.add(block.dot(&block).sqrt());
                    }
                }
                count += gx.nrows();
            }
        }
    }
    let n_minibatches = x.nrows().div_ceil(batch_size);
    let norms = sums.iter().map(|k| k.sum / count as f64).collect();
    GradientProfile::new(norms, n_minibatches)
}

/// Compensated summation so the result does not depend on accumulation
/// order beyond rounding of the final value.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}
