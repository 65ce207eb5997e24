use ndarray::{Array1, Axis};

use super::FrameMatrix;
use crate::error::{invalid, Error, Result};

const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

pub fn fit_normalizer(m: &FrameMatrix) -> Result<NormStats> {
    fit_normalizer_set(std::slice::from_ref(m))
}

/// Pooled statistics over several matrices with the same width.
pub fn fit_normalizer_set(ms: &[FrameMatrix]) -> Result<NormStats> {
    let first = ms.first().ok_or(Error::Empty("feature set"))?;
    let dim = first.n_features();
    let n: usize = ms.iter().map(|m| m.n_frames()).sum();
    if n < 2 {
        return invalid("need at least two frames to fit a normalizer");
    }
    if ms.iter().any(|m| m.n_features() != dim) {
        return Err(Error::Shape("feature widths differ".into()));
    }
    let mut mean = Array1::<f64>::zeros(dim);
    for m in ms {
        mean += &m.data.sum_axis(Axis(0));
    }
    mean /= n as f64;
    let mut var = Array1::<f64>::zeros(dim);
    for m in ms {
        for row in m.data.outer_iter() {
            let d = &row - &mean;
            var += &(&d * &d);
        }
    }
    var /= n as f64;
    let std = var.mapv(|v| v.sqrt().max(STD_FLOOR));
    Ok(NormStats { mean, std })
}

pub fn apply_normalizer(m: &FrameMatrix, stats: &NormStats) -> Result<FrameMatrix> {
    if m.n_features() != stats.mean.len() {
        return Err(Error::Shape(format!(
            "matrix has {} features, stats have {}",
            m.n_features(),
            stats.mean.len()
        )));
    }
    let data = (&m.data - &stats.mean) / &stats.std;
    Ok(FrameMatrix {
        data,
        labels: m.labels.clone(),
        frame_times: m.frame_times.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn two_frames() {
        let m = FrameMatrix::new(array![[0.0], [2.0]]);
        let s = fit_normalizer(&m).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.std[0], 1.0);
        let n = apply_normalizer(&m, &s).unwrap();
        assert_eq!(n.data, array![[-1.0], [1.0]]);
    }

    #[test]
    fn constant_dimension_goes_to_zero() {
        let m = FrameMatrix::new(array![[3.0, 1.0], [3.0, 2.0], [3.0, 4.0]]);
        let s = fit_normalizer(&m).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        let n = apply_normalizer(&m, &s).unwrap();
        assert!(n.data.column(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardizes_random_data() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(21);
        let data = Array2::from_shape_fn((200, 5), |(_, j)| {
            rng.random_range(-1.0..1.0) * (j + 1) as f64 + j as f64 * 3.0
        });
        let m = FrameMatrix::new(data);
        let s = fit_normalizer(&m).unwrap();
        let n = apply_normalizer(&m, &s).unwrap();
        for col in n.data.columns() {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
        // already standardized data is left (almost) unchanged
        let s2 = fit_normalizer(&n).unwrap();
        let again = apply_normalizer(&n, &s2).unwrap();
        assert!(again
            .data
            .iter()
            .zip(n.data.iter())
            .all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn fit_needs_two_frames() {
        let m = FrameMatrix::new(array![[1.0, 2.0]]);
        assert!(fit_normalizer(&m).is_err());
        let s = fit_normalizer(&FrameMatrix::new(array![[1.0], [2.0]])).unwrap();
        assert!(apply_normalizer(&m, &s).is_err());
    }
}
