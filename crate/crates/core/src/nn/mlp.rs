use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Floor applied to probabilities inside the cross-entropy only.
pub const LOSS_PROB_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub n_classes: usize,
    pub seed: u64,
}

impl MlpConfig {
    /// Four sigmoid layers of 256 units.
    pub fn desk(input_dim: usize, n_classes: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![256; 4],
            n_classes,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_classes == 0 || self.hidden_dims.contains(&0) {
            return invalid(format!("all layer sizes must be positive: {self:?}"));
        }
        Ok(())
    }
}

/// Affine layer `x W + b` with `W` stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn n_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        for l in &layers {
            if l.weights.ncols() != l.bias.len() {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].weights.ncols() != pair[1].weights.nrows() {
                return Err(Error::Shape("inconsistent layer chain".into()));
            }
        }
        Ok(Self { layers })
    }

    pub(crate) fn apply_update(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-lr, gw);
            layer.bias.scaled_add(-lr, gb);
        }
    }
}

/// Per-layer `(dW, db)` of the summed loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(cfg: &MlpConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let mut dims = vec![cfg.input_dim];
    dims.extend(&cfg.hidden_dims);
    dims.push(cfg.n_classes);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-limit..=limit)
                }),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpModel { layers })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_input(model: &MlpModel, batch: &ArrayView2<f64>) -> Result<()> {
    if batch.ncols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, model expects {}",
            batch.ncols(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Hidden activations (inputs excluded) and output logits.
fn activations(model: &MlpModel, batch: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
    let n = model.layers.len();
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(n - 1);
    let mut logits = None;
    for (i, layer) in model.layers.iter().enumerate() {
        let input = if i == 0 { batch } else { hidden[i - 1].view() };
        let mut z = input.dot(&layer.weights);
        z += &layer.bias;
        if i + 1 == n {
            logits = Some(z);
        } else {
            z.mapv_inplace(sigmoid);
            hidden.push(z);
        }
    }
    (hidden, logits.expect("at least one layer"))
}

/// Row-wise log-sum-exp softmax in place.
fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Posterior probabilities, one row per input row.
pub fn forward(model: &MlpModel, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(model, &batch)?;
    let (_, mut z) = activations(model, batch);
    softmax_rows(&mut z);
    Ok(z)
}

fn check_labels(model: &MlpModel, rows: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            rows
        )));
    }
    let k = model.n_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes: k,
        });
    }
    Ok(())
}

/// Summed cross-entropy of the batch.
pub fn loss(model: &MlpModel, batch: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_input(model, &batch)?;
    check_labels(model, batch.nrows(), labels)?;
    let (_, z) = activations(model, batch);
    let cap = -LOSS_PROB_FLOOR.ln();
    Ok(z.outer_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            (lse - row[y]).min(cap)
        })
        .sum())
}

/// Gradients of the summed cross-entropy w.r.t. every parameter and every
/// input coordinate.
pub fn backward(
    model: &MlpModel,
    batch: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(Gradients, Array2<f64>)> {
    check_input(model, &batch)?;
    check_labels(model, batch.nrows(), labels)?;
    let (hidden, mut delta) = activations(model, batch);
    softmax_rows(&mut delta);
    for (mut row, &y) in delta.outer_iter_mut().zip(labels) {
        row[y] -= 1.0;
    }

    let n = model.layers.len();
    let mut grads: Vec<Option<(Array2<f64>, Array1<f64>)>> = vec![None; n];
    for i in (0..n).rev() {
        let input = if i == 0 { batch } else { hidden[i - 1].view() };
        let gw = input.t().dot(&delta);
        let gb = delta.sum_axis(Axis(0));
        grads[i] = Some((gw, gb));
        let mut back = delta.dot(&model.layers[i].weights.t());
        if i > 0 {
            Zip::from(&mut back)
                .and(&hidden[i - 1])
                .for_each(|d, &a| *d *= a * (1.0 - a));
        }
        delta = back;
    }
    let layers = grads.into_iter().map(|g| g.expect("filled")).collect();
    Ok((Gradients { layers }, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s};

    fn toy(seed: u64, dims: &[usize]) -> MlpModel {
        init_model(&MlpConfig {
            input_dim: dims[0],
            hidden_dims: dims[1..dims.len() - 1].to_vec(),
            n_classes: dims[dims.len() - 1],
            seed,
        })
        .unwrap()
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let m = toy(3, &[4, 8, 3]);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(m.layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(m.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert_eq!(m, toy(3, &[4, 8, 3]));
        assert_ne!(m, toy(4, &[4, 8, 3]));
        assert!(init_model(&MlpConfig {
            input_dim: 3,
            hidden_dims: vec![0],
            n_classes: 2,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut m = toy(1, &[5, 7, 4]);
        m.layers[1].weights.fill(0.0);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 * 0.1);
        let p = forward(&m, x.view()).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn rows_sum_to_one() {
        let m = toy(2, &[6, 10, 10, 5]);
        let mut rng = crate::rng::seeded(9);
        let x = Array2::from_shape_fn((20, 6), |_| rng.random_range(-3.0..3.0));
        let p = forward(&m, x.view()).unwrap();
        for row in p.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
        assert!(forward(&m, Array2::zeros((1, 5)).view()).is_err());
    }

    #[test]
    fn hand_computed_chain() {
        // 1 input -> 1 sigmoid unit -> 2-way softmax
        let m = MlpModel::from_layers(vec![
            Layer {
                weights: array![[0.7]],
                bias: array![-0.2],
            },
            Layer {
                weights: array![[1.5, -0.5]],
                bias: array![0.1, 0.3],
            },
        ])
        .unwrap();
        let x = 0.9f64;
        let h = 1.0 / (1.0 + (-(0.7 * x - 0.2)).exp());
        let z0 = 1.5 * h + 0.1;
        let z1 = -0.5 * h + 0.3;
        let p0 = z0.exp() / (z0.exp() + z1.exp());
        let p = forward(&m, array![[x]].view()).unwrap();
        assert!((p[[0, 0]] - p0).abs() < 1e-12);
        assert!((p[[0, 1]] - (1.0 - p0)).abs() < 1e-12);
    }

    #[test]
    fn duplicated_example_doubles_gradient() {
        let m = toy(5, &[3, 4, 3]);
        let one = array![[0.3, -0.8, 1.1]];
        let two = array![[0.3, -0.8, 1.1], [0.3, -0.8, 1.1]];
        let (g1, x1) = backward(&m, one.view(), &[2]).unwrap();
        let (g2, x2) = backward(&m, two.view(), &[2, 2]).unwrap();
        for ((w1, b1), (w2, b2)) in g1.layers.iter().zip(&g2.layers) {
            assert!(w1.iter().zip(w2).all(|(a, b)| (2.0 * a - b).abs() < 1e-14));
            assert!(b1.iter().zip(b2).all(|(a, b)| (2.0 * a - b).abs() < 1e-14));
        }
        assert_eq!(x2.slice(s![0..1, ..]), x1);
        assert_eq!(x2.slice(s![1..2, ..]), x1);
    }

    #[test]
    fn label_checks() {
        let m = toy(5, &[3, 4, 3]);
        let x = array![[0.0, 0.0, 0.0]];
        assert!(matches!(
            backward(&m, x.view(), &[3]),
            Err(Error::LabelOutOfRange {
                label: 3,
                n_classes: 3
            })
        ));
        assert!(backward(&m, x.view(), &[0, 1]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = toy(7, &[4, 5, 3, 3]);
        let mut rng = crate::rng::seeded(17);
        let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let y = [0, 2, 1];
        let (g, gx) = backward(&m, x.view(), &y).unwrap();
        let eps = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
        for (li, layer) in m.layers.iter().enumerate() {
            for idx in 0..layer.weights.len() {
                let (r, c) = (idx / layer.weights.ncols(), idx % layer.weights.ncols());
                let mut p = m.clone();
                p.layers[li].weights[[r, c]] += eps;
                let up = loss(&p, x.view(), &y).unwrap();
                p.layers[li].weights[[r, c]] -= 2.0 * eps;
                let dn = loss(&p, x.view(), &y).unwrap();
                assert!(rel((up - dn) / (2.0 * eps), g.layers[li].0[[r, c]]) < 1e-4);
            }
        }
        for r in 0..3 {
            for c in 0..4 {
                let mut xp = x.clone();
                xp[[r, c]] += eps;
                let up = loss(&m, xp.view(), &y).unwrap();
                xp[[r, c]] -= 2.0 * eps;
                let dn = loss(&m, xp.view(), &y).unwrap();
                assert!(rel((up - dn) / (2.0 * eps), gx[[r, c]]) < 1e-4);
            }
        }
    }
}
