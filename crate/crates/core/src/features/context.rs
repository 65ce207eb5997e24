use ndarray::{s, Array2};

use super::{ContextWindowSpec, FrameMatrix};
use crate::error::{invalid, Error, Result};

/// Splices `[y_{k-N_p}, ..., y_k, ..., y_{k+N_f}]` into row `k`; indices
/// outside the sequence are clamped to the first/last frame.
pub fn assemble_context(m: &FrameMatrix, spec: ContextWindowSpec) -> Result<Array2<f64>> {
    let n = m.n_frames();
    if n == 0 {
        return Err(Error::Empty("feature matrix"));
    }
    let d = m.n_features();
    let mut out = Array2::<f64>::zeros((n, spec.len() * d));
    for k in 0..n {
        for (slot, p) in spec.offsets().enumerate() {
            let src = (k as i64 + p).clamp(0, n as i64 - 1) as usize;
            out.slice_mut(s![k, slot * d..(slot + 1) * d])
                .assign(&m.data.row(src));
        }
    }
    Ok(out)
}

/// Context-assembles every utterance independently and stacks the rows.
/// Every matrix must carry labels.
pub fn assemble_set(
    set: &[FrameMatrix],
    spec: ContextWindowSpec,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let first = set.first().ok_or(Error::Empty("feature set"))?;
    let d = first.n_features();
    let total: usize = set.iter().map(|m| m.n_frames()).sum();
    let mut out = Array2::<f64>::zeros((total, spec.len() * d));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for m in set {
        if m.n_features() != d {
            return Err(Error::Shape(
                "feature widths differ across utterances".into(),
            ));
        }
        let l = m
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("unlabeled feature matrix".into()))?;
        let ctx = assemble_context(m, spec)?;
        out.slice_mut(s![row..row + m.n_frames(), ..]).assign(&ctx);
        labels.extend_from_slice(l);
        row += m.n_frames();
    }
    Ok((out, labels))
}

/// Percentage of context frames taken from the past: `100 N_p / (N_p + N_f)`.
pub fn rho_cw(spec: ContextWindowSpec) -> Result<f64> {
    let total = spec.n_past + spec.n_future;
    if total == 0 {
        return invalid("rho_cw undefined without context frames");
    }
    Ok(100.0 * spec.n_past as f64 / total as f64)
}

/// Pearson coefficient between clean frames `x_k` and reverberant frames
/// `y_{k+p}` for `p` in `-n_past ..= n_future`, pooled over all valid frame
/// pairs and dimensions.
pub fn pearson_lag_profile(
    clean: &FrameMatrix,
    rev: &FrameMatrix,
    n_past: usize,
    n_future: usize,
) -> Result<Vec<f64>> {
    if clean.data.dim() != rev.data.dim() {
        return Err(Error::Shape(format!(
            "clean {:?} vs reverberant {:?}",
            clean.data.dim(),
            rev.data.dim()
        )));
    }
    let n = clean.n_frames() as i64;
    if n == 0 {
        return Err(Error::Empty("feature matrix"));
    }
    let mut out = Vec::with_capacity(n_past + n_future + 1);
    for p in -(n_past as i64)..=n_future as i64 {
        let lo = (-p).max(0);
        let hi = (n - p).min(n);
        if hi - lo < 1 {
            return invalid(format!("lag {p} leaves no overlapping frames"));
        }
        let (lo, hi) = (lo as usize, hi as usize);
        let (ylo, yhi) = ((lo as i64 + p) as usize, (hi as i64 + p) as usize);
        let x = clean.data.slice(s![lo..hi, ..]);
        let y = rev.data.slice(s![ylo..yhi, ..]);
        let count = x.len() as f64;
        let (mx, my) = (x.sum() / count, y.sum() / count);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y.iter()) {
            let (da, db) = (a - mx, b - my);
            sxy += da * db;
            sxx += da * da;
            syy += db * db;
        }
        if sxx == 0.0 || syy == 0.0 {
            return Err(Error::ZeroEnergy("zero-variance input to Pearson"));
        }
        out.push((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn identity_window() {
        let m = FrameMatrix::new(array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(
            assemble_context(&m, ContextWindowSpec::new(0, 0)).unwrap(),
            m.data
        );
    }

    #[test]
    fn three_frames_one_each_side() {
        let m = FrameMatrix::new(array![[1.0], [2.0], [3.0]]);
        let out = assemble_context(&m, ContextWindowSpec::new(1, 1)).unwrap();
        assert_eq!(
            out,
            array![[1.0, 1.0, 2.0], [1.0, 2.0, 3.0], [2.0, 3.0, 3.0]]
        );
    }

    #[test]
    fn full_clamping() {
        let m = FrameMatrix::new(array![[7.0]]);
        let out = assemble_context(&m, ContextWindowSpec::new(2, 0)).unwrap();
        assert_eq!(out, array![[7.0, 7.0, 7.0]]);
        let empty = FrameMatrix::new(Array2::zeros((0, 3)));
        assert!(assemble_context(&empty, ContextWindowSpec::new(1, 1)).is_err());
    }

    #[test]
    fn set_keeps_utterances_apart() {
        let a = FrameMatrix::new(array![[1.0], [2.0]])
            .with_labels(vec![0, 1])
            .unwrap();
        let b = FrameMatrix::new(array![[10.0], [20.0]])
            .with_labels(vec![2, 3])
            .unwrap();
        let (x, l) = assemble_set(&[a, b], ContextWindowSpec::new(1, 0)).unwrap();
        assert_eq!(
            x,
            array![[1.0, 1.0], [1.0, 2.0], [10.0, 10.0], [10.0, 20.0]]
        );
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho_cw(ContextWindowSpec::new(9, 9)).unwrap(), 50.0);
        let r = rho_cw(ContextWindowSpec::new(11, 7)).unwrap();
        assert!((r - 61.11).abs() < 0.005);
        let r = rho_cw(ContextWindowSpec::new(19, 5)).unwrap();
        assert!((r - 79.17).abs() < 0.005);
        assert!(rho_cw(ContextWindowSpec::new(0, 0)).is_err());
    }

    fn random(rng: &mut impl Rng, n: usize, d: usize) -> FrameMatrix {
        FrameMatrix::new(Array2::from_shape_fn((n, d), |_| {
            rng.random_range(-1.0..1.0)
        }))
    }

    #[test]
    fn pearson_self_and_shift() {
        let mut rng = crate::rng::seeded(12);
        let x = random(&mut rng, 30, 4);
        let prof = pearson_lag_profile(&x, &x, 3, 3).unwrap();
        assert!((prof[3] - 1.0).abs() < 1e-12);

        // y_{k+2} = x_k
        let mut y = random(&mut rng, 30, 4);
        for k in 0..28 {
            let row = x.data.row(k).to_owned();
            y.data.row_mut(k + 2).assign(&row);
        }
        let prof = pearson_lag_profile(&x, &y, 4, 4).unwrap();
        let best = prof
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as i64
            - 4;
        assert_eq!(best, 2);
    }

    #[test]
    fn pearson_matches_textbook_formula() {
        let mut rng = crate::rng::seeded(13);
        let x = random(&mut rng, 10, 3);
        let y = random(&mut rng, 10, 3);
        let prof = pearson_lag_profile(&x, &y, 2, 2).unwrap();
        for (i, p) in (-2i64..=2).enumerate() {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for k in 0..10i64 {
                if (0..10).contains(&(k + p)) {
                    a.extend(x.data.row(k as usize).iter().copied());
                    b.extend(y.data.row((k + p) as usize).iter().copied());
                }
            }
            let n = a.len() as f64;
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            let sab: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
            let saa: f64 = a.iter().map(|u| u * u).sum();
            let sbb: f64 = b.iter().map(|u| u * u).sum();
            let r = (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt());
            assert!((prof[i] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_rejects_constant() {
        let x = FrameMatrix::new(Array2::from_elem((5, 2), 1.0));
        assert!(pearson_lag_profile(&x, &x, 1, 1).is_err());
    }
}
