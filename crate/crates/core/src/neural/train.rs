use log::debug;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamParams, AdamState, Network};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 50,
            validation_fraction: 0.2,
            early_stop_patience: 5,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction", "must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("adam_beta", "must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::invalid("adam_epsilon", "must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch_size", "batch size and epochs must be >= 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub validation_accuracy: Vec<f64>,
    pub epochs: usize,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_validation: usize,
}

/// Feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: inputs.nrows(),
                actual: labels.len(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Class-stratified split. The validation set holds `round(fraction * n)` rows,
/// shared among classes in proportion to their counts.
pub fn split_indices(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n = labels.len();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let n_val = (fraction * n as f64).round() as usize;
    let mut rng = seed::rng(seed::derive(seed, "split", 0));
    let mut train = Vec::with_capacity(n - n_val);
    let mut val = Vec::with_capacity(n_val);
    let mut assigned = 0usize;
    let mut seen = 0usize;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        seen += idx.len();
        // cumulative rounding keeps the total exactly n_val
        let target = (n_val as f64 * seen as f64 / n as f64).round() as usize;
        let take = target - assigned;
        assigned = target;
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Mini-batch Adam on softmax cross-entropy with early stopping on validation
/// loss. Returns the parameters of the best validation epoch.
pub fn train(net: Network, data: &TrainingSet, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    if data.len() < 10 {
        return Err(Error::invalid("dataset", format!("{} samples; need at least 10", data.len())));
    }
    let n_classes = net.output_dim();
    let mut counts = vec![0usize; n_classes];
    for &l in &data.labels {
        if l >= n_classes {
            return Err(Error::invalid("label", format!("class {l} out of range")));
        }
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    if data.inputs.ncols() != net.input_dim() {
        return Err(Error::LengthMismatch {
            expected: net.input_dim(),
            actual: data.inputs.ncols(),
        });
    }

    let (train_idx, val_idx) = split_indices(&data.labels, cfg.validation_fraction, cfg.shuffle_seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::invalid("validation_fraction", "split leaves an empty side"));
    }
    let val_x = data.inputs.select(Axis(0), &val_idx);
    let val_y: Vec<usize> = val_idx.iter().map(|&i| data.labels[i]).collect();

    let adam = cfg.adam();
    let mut net = net;
    let mut state = AdamState::new(&net);
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut report = TrainReport {
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        ..TrainReport::default()
    };
    let mut since_best = 0usize;
    let mut order = train_idx.clone();

    for epoch in 0..cfg.max_epochs {
        let mut rng = seed::rng(seed::derive(cfg.shuffle_seed, "epoch", epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs = data.inputs.select(Axis(0), batch);
            let ys: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = net.batch_gradients(xs.view(), &ys)?;
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut net, &grads, &mut state, &adam)?;
        }
        let train_loss = loss_sum / order.len() as f64;
        let (val_loss, val_acc) = net.evaluate(val_x.view(), &val_y)?;
        debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {val_acc:.4}");
        if !train_loss.is_finite() || !net.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at epoch {}", epoch + 1)));
        }
        report.train_loss.push(train_loss);
        report.validation_loss.push(val_loss);
        report.validation_accuracy.push(val_acc);
        report.epochs = epoch + 1;
        if val_loss < best.0 {
            best = (val_loss, net.clone(), epoch + 1);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                report.stopped_early = epoch + 1 < cfg.max_epochs;
                break;
            }
        }
    }
    report.best_epoch = best.2;
    Ok((best.1, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_balance() {
        let labels: Vec<usize> = (0..101).map(|i| usize::from(i % 2 == 0)).collect();
        let (tr, va) = split_indices(&labels, 0.2, 3);
        assert_eq!(va.len(), 20);
        assert_eq!(tr.len() + va.len(), 101);
        let ones = va.iter().filter(|&&i| labels[i] == 1).count();
        let zeros = va.len() - ones;
        assert!(ones.abs_diff(zeros) <= 1);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(split_indices(&labels, 0.2, 3), (tr, va));
    }
}
