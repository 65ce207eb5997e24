use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::mlp::{backward, forward, MlpModel};
use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Validation accuracy increment (percentage points) below which the
    /// learning rate starts halving.
    pub halve_threshold: f64,
    /// Increment below which training stops.
    pub stop_threshold: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.008,
            halve_threshold: 0.5,
            stop_threshold: 0.1,
            batch_size: 128,
            max_epochs: 20,
            validation_fraction: 0.10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.stop_threshold > 0.0 && self.stop_threshold <= self.halve_threshold) {
            return invalid("need 0 < stop_threshold <= halve_threshold");
        }
        if self.batch_size == 0 {
            return invalid("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return invalid("max_epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return invalid("validation_fraction must lie in [0, 1)");
        }
        if !(self.initial_lr > 0.0) {
            return invalid("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    /// Validation accuracy improved by less than the stop threshold.
    Converged,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::Converged => "converged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Validation frame accuracy before the first epoch, percent.
    pub initial_val_accuracy: f64,
    /// Validation frame accuracy after each epoch, percent.
    pub val_accuracy: Vec<f64>,
    /// Learning rate used during each epoch.
    pub learning_rates: Vec<f64>,
    /// Summed training cross-entropy per epoch divided by the number of
    /// training frames.
    pub train_loss: Vec<f64>,
    pub epochs: usize,
    pub stop_reason: StopReason,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub wall_time: Duration,
}

impl TrainReport {
    /// `epoch,lr,val_accuracy` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,val_accuracy\n");
        for (i, (lr, acc)) in self
            .learning_rates
            .iter()
            .zip(&self.val_accuracy)
            .enumerate()
        {
            s.push_str(&format!("{},{},{:.6}\n", i + 1, lr, acc));
        }
        s
    }
}

const EVAL_CHUNK: usize = 4096;

/// Argmax class per row.
pub fn predict(model: &MlpModel, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(x.nrows());
    for chunk in x.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        let p = forward(model, chunk)?;
        out.extend(p.outer_iter().map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        }));
    }
    Ok(out)
}

/// Percentage of misclassified frames under argmax decisions.
pub fn frame_error_rate(model: &MlpModel, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Empty("evaluation data"));
    }
    if labels.len() != x.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let pred = predict(model, x)?;
    let wrong = pred.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(100.0 * wrong as f64 / labels.len() as f64)
}

/// Minibatch SGD on the summed cross-entropy with newbob-style annealing:
/// the rate stays fixed while the validation accuracy gains at least
/// `halve_threshold` points per epoch, is halved every epoch after that,
/// and training stops once the gain drops below `stop_threshold`.
///
/// Returns the parameters of the epoch with the best validation accuracy.
pub fn train_sgd(
    model: MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let start = Instant::now();
    let mut rng = rng::seeded(cfg.seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * n as f64).round() as usize;
    if n_val >= n {
        return invalid("validation split leaves no training data");
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    if cfg.batch_size > train_idx.len() {
        return invalid(format!(
            "batch_size {} exceeds {} training rows",
            cfg.batch_size,
            train_idx.len()
        ));
    }
    // with no held-out rows the schedule monitors training accuracy
    let (val_x, val_y): (Array2<f64>, Vec<usize>) = if val_idx.is_empty() {
        (x.to_owned(), labels.to_vec())
    } else {
        (
            x.select(Axis(0), val_idx),
            val_idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let accuracy =
        |m: &MlpModel| -> Result<f64> { Ok(100.0 - frame_error_rate(m, val_x.view(), &val_y)?) };

    let mut model = model;
    let initial = accuracy(&model)?;
    let mut prev = initial;
    let mut lr = cfg.initial_lr;
    let mut halving = false;
    let mut report = TrainReport {
        initial_val_accuracy: initial,
        val_accuracy: Vec::new(),
        learning_rates: Vec::new(),
        train_loss: Vec::new(),
        epochs: 0,
        stop_reason: StopReason::MaxEpochs,
        best_epoch: 0,
        wall_time: Duration::ZERO,
    };
    let mut best: Option<(f64, MlpModel)> = None;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            epoch_loss += super::loss(&model, bx.view(), &by)?;
            let (grads, _) = backward(&model, bx.view(), &by)?;
            model.apply_update(&grads, lr);
        }
        let acc = accuracy(&model)?;
        report.val_accuracy.push(acc);
        report.learning_rates.push(lr);
        report.train_loss.push(epoch_loss / train_idx.len() as f64);
        report.epochs = epoch;
        if best.as_ref().is_none_or(|(a, _)| acc > *a) {
            best = Some((acc, model.clone()));
            report.best_epoch = epoch;
        }

        let gain = acc - prev;
        prev = acc;
        if gain < cfg.stop_threshold {
            report.stop_reason = StopReason::Converged;
            break;
        }
        if halving || gain < cfg.halve_threshold {
            halving = true;
            lr *= 0.5;
        }
    }
    if report.stop_reason == StopReason::Converged && report.epochs == cfg.max_epochs {
        report.stop_reason = StopReason::MaxEpochs;
    }
    report.wall_time = start.elapsed();
    let (_, model) = best.expect("at least one epoch");
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, MlpConfig};
    use ndarray::array;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rng::seeded(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 2;
            let center = if c == 0 { -2.0 } else { 2.0 };
            x[[i, 0]] = center + rng.random_range(-1.0..1.0);
            x[[i, 1]] = rng.random_range(-1.0..1.0);
            y.push(c);
        }
        (x, y)
    }

    fn small_model(seed: u64) -> MlpModel {
        init_model(&MlpConfig {
            input_dim: 2,
            hidden_dims: vec![8],
            n_classes: 2,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn separable_blobs_train() {
        let (x, y) = blobs(400, 1);
        // oracle: the threshold x0 = 0 separates the blobs perfectly
        assert!(x
            .outer_iter()
            .zip(&y)
            .all(|(r, &c)| (r[0] > 0.0) == (c == 1)));
        let cfg = TrainConfig {
            initial_lr: 0.05,
            batch_size: 16,
            max_epochs: 20,
            ..Default::default()
        };
        let (m, report) = train_sgd(small_model(2), x.view(), &y, &cfg).unwrap();
        assert!(*report.val_accuracy.last().unwrap() >= 95.0);
        assert!(frame_error_rate(&m, x.view(), &y).unwrap() <= 5.0);
        assert!(report.learning_rates.windows(2).all(|w| w[1] <= w[0]));
        let first_half = report
            .learning_rates
            .iter()
            .position(|&lr| lr < cfg.initial_lr);
        if let Some(i) = first_half {
            for w in report.learning_rates[i - 1..].windows(2) {
                assert_eq!(w[1], w[0] * 0.5);
            }
        }
        for w in report.train_loss[1..].windows(2) {
            assert!(w[1] <= w[0] * 1.05);
        }
    }

    #[test]
    fn one_epoch_limit() {
        let (x, y) = blobs(100, 3);
        let cfg = TrainConfig {
            max_epochs: 1,
            batch_size: 10,
            ..Default::default()
        };
        let (_, r) = train_sgd(small_model(1), x.view(), &y, &cfg).unwrap();
        assert_eq!(r.epochs, 1);
        assert_eq!(r.stop_reason, StopReason::MaxEpochs);
    }

    #[test]
    fn deterministic_report() {
        let (x, y) = blobs(200, 4);
        let cfg = TrainConfig {
            batch_size: 8,
            max_epochs: 5,
            seed: 42,
            ..Default::default()
        };
        let (m1, r1) = train_sgd(small_model(1), x.view(), &y, &cfg).unwrap();
        let (m2, r2) = train_sgd(small_model(1), x.view(), &y, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.val_accuracy, r2.val_accuracy);
        assert_eq!(r1.learning_rates, r2.learning_rates);
        assert_eq!(r1.train_loss, r2.train_loss);
        assert_eq!(r1.epochs, r2.epochs);
        assert_eq!(r1.stop_reason, r2.stop_reason);
        assert_eq!(r1.to_csv(), r2.to_csv());
    }

    #[test]
    fn training_errors() {
        let (x, y) = blobs(20, 4);
        let cfg = TrainConfig {
            batch_size: 19,
            ..Default::default()
        };
        assert!(train_sgd(small_model(1), x.view(), &y, &cfg).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(train_sgd(small_model(1), empty.view(), &[], &TrainConfig::default()).is_err());
        let bad = TrainConfig {
            stop_threshold: 1.0,
            ..Default::default()
        };
        assert!(train_sgd(small_model(1), x.view(), &y, &bad).is_err());
    }

    #[test]
    fn error_rate_counts() {
        // identity-like 2-input model: class = argmax of input
        let m = MlpModel::from_layers(vec![
            crate::nn::Layer {
                weights: array![[10.0, 0.0], [0.0, 10.0]],
                bias: array![0.0, 0.0],
            },
            crate::nn::Layer {
                weights: array![[10.0, -10.0], [-10.0, 10.0]],
                bias: array![0.0, 0.0],
            },
        ])
        .unwrap();
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.9, 0.1]];
        assert_eq!(predict(&m, x.view()).unwrap(), vec![0, 1, 0, 1, 0]);
        let fer = frame_error_rate(&m, x.view(), &[0, 1, 1, 1, 1]).unwrap();
        assert!((fer - 40.0).abs() < 1e-12);
        assert_eq!(
            frame_error_rate(&m, x.view(), &[0, 1, 0, 1, 0]).unwrap(),
            0.0
        );
        assert!(frame_error_rate(&m, Array2::zeros((0, 2)).view(), &[]).is_err());
    }

    #[test]
    fn uniform_model_is_at_chance() {
        let mut m = init_model(&MlpConfig {
            input_dim: 3,
            hidden_dims: vec![4],
            n_classes: 4,
            seed: 0,
        })
        .unwrap();
        m.layers[1].weights.fill(0.0);
        let n = 4000;
        let x = Array2::<f64>::zeros((n, 3));
        let y: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let fer = frame_error_rate(&m, x.view(), &y).unwrap();
        assert!((fer - 75.0).abs() < 1.0);
    }
}
