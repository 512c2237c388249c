//! Dense ReLU networks with hand-derived backpropagation, Adam, and
//! softmax cross-entropy training.

mod adam;
mod persist;
mod train;

pub use adam::{adam_step, AdamParams, AdamState};
pub use persist::{read_model, write_model, ModelFile};
pub use train::{split_indices, train, TrainConfig, TrainReport, TrainingSet};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::signal::Waveform;

/// Probability floor used before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Rows per gradient work item. Fixed so that the reduction order does not
/// depend on the thread count.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    pub init_seed: u64,
}

impl Default for NetworkConfig {
    /// 2000 I + 2000 Q inputs, hidden layers of 900, 250 and 50 units, two outputs.
    fn default() -> Self {
        Self {
            input_dim: 4000,
            hidden_dims: vec![900, 250, 50],
            output_dim: 2,
            activation: Activation::Relu,
            init_seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Reduced topology for 256-point waveforms.
    pub fn ci() -> Self {
        Self {
            input_dim: 512,
            hidden_dims: vec![128, 64, 16],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("network", "all layer sizes must be >= 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One affine layer; `weights` is `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub layers: Vec<Dense>,
}

/// Parameter-shaped buffers (gradients, Adam moments).
pub type Gradients = Vec<Dense>;

/// He-uniform weights in `[-sqrt(6/fan_in), sqrt(6/fan_in)]`, zero biases.
pub fn init_network(cfg: &NetworkConfig) -> Result<Network> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.init_seed, "init", 0));
    let layers = cfg
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-bound..=bound)
            });
            Dense {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(Network {
        config: cfg.clone(),
        layers,
    })
}

impl Network {
    /// Builds a network from explicit layers, checking that shapes chain.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::LengthMismatch {
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for ((fan_in, fan_out), l) in shapes.iter().zip(&layers) {
            if l.fan_in() != *fan_in || l.fan_out() != *fan_out || l.bias.len() != *fan_out {
                return Err(Error::invalid("layers", "layer shapes do not chain"));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Gradients {
        self.layers
            .iter()
            .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
            .collect()
    }

    /// Logits for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut a = ArrayView1::from(x).to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.dot(&a) + &layer.bias;
            if k != last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a.to_vec())
    }

    /// Logits for a batch, one row per input.
    pub fn forward_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: xs.ncols(),
            });
        }
        Ok(self.forward_cached(xs).pop().expect("at least one layer"))
    }

    /// Per-layer outputs: hidden activations after ReLU, final entry the logits.
    fn forward_cached(&self, xs: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.layers.len() - 1;
        let mut outs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { xs } else { outs[k - 1].view() };
            let mut z = input.dot(&layer.weights.t()) + &layer.bias;
            if k != last {
                z.mapv_inplace(relu);
            }
            outs.push(z);
        }
        outs
    }

    /// Summed (not averaged) loss and gradients over a block of rows.
    fn block_gradients(&self, xs: ArrayView2<f64>, labels: &[usize]) -> (f64, Gradients) {
        let outs = self.forward_cached(xs);
        let logits = outs.last().expect("at least one layer");
        let mut delta = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (r, (row, &label)) in logits.outer_iter().zip(labels).enumerate() {
            let p = softmax(row.as_slice().expect("contiguous"));
            loss -= p[label].max(PROB_FLOOR).ln();
            for (c, pc) in p.iter().enumerate() {
                delta[[r, c]] = pc - if c == label { 1.0 } else { 0.0 };
            }
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = if k == 0 { xs } else { outs[k - 1].view() };
            let gw = delta.t().dot(&input);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&self.layers[k].weights);
                Zip::from(&mut next)
                    .and(&outs[k - 1])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = next;
            }
            grads.push(Dense { weights: gw, bias: gb });
        }
        grads.reverse();
        (loss, grads)
    }

    /// Mean softmax cross-entropy and its gradient over a batch.
    pub fn batch_gradients(&self, xs: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_batch(xs, labels)?;
        let n = xs.nrows();
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        let n_chunks = n.div_ceil(GRAD_CHUNK);
        let parts = par::map_range(n_chunks, |c| {
            let lo = c * GRAD_CHUNK;
            let hi = (lo + GRAD_CHUNK).min(n);
            self.block_gradients(xs.slice(s![lo..hi, ..]), &labels[lo..hi])
        });
        let mut parts = parts.into_iter();
        let (mut loss, mut total) = parts.next().expect("non-empty batch");
        for (l, g) in parts {
            loss += l;
            accumulate(&mut total, &g);
        }
        let inv = 1.0 / n as f64;
        scale(&mut total, inv);
        Ok((loss * inv, total))
    }

    /// Mean loss and accuracy (argmax) over a batch, without gradients.
    pub fn evaluate(&self, xs: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, f64)> {
        self.check_batch(xs, labels)?;
        if labels.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let n = xs.nrows();
        let n_chunks = n.div_ceil(GRAD_CHUNK);
        let parts = par::map_range(n_chunks, |c| {
            let lo = c * GRAD_CHUNK;
            let hi = (lo + GRAD_CHUNK).min(n);
            let logits = self.forward_cached(xs.slice(s![lo..hi, ..])).pop().expect("layer");
            let mut loss = 0.0;
            let mut correct = 0usize;
            for (row, &label) in logits.outer_iter().zip(&labels[lo..hi]) {
                let p = softmax(row.as_slice().expect("contiguous"));
                loss -= p[label].max(PROB_FLOOR).ln();
                if argmax(&p) == label {
                    correct += 1;
                }
            }
            (loss, correct)
        });
        let (loss, correct) = parts
            .into_iter()
            .fold((0.0, 0), |(l, c), (dl, dc)| (l + dl, c + dc));
        Ok((loss / n as f64, correct as f64 / n as f64))
    }

    fn check_batch(&self, xs: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: xs.ncols(),
            });
        }
        if xs.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: xs.nrows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.output_dim()) {
            return Err(Error::invalid("label", format!("class {bad} out of range")));
        }
        Ok(())
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

pub(crate) fn accumulate(total: &mut Gradients, part: &Gradients) {
    for (t, p) in total.iter_mut().zip(part) {
        t.weights += &p.weights;
        t.bias += &p.bias;
    }
}

pub(crate) fn scale(g: &mut Gradients, factor: f64) {
    for l in g.iter_mut() {
        l.weights *= factor;
        l.bias *= factor;
    }
}

/// Forward pass for one input.
pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    net.forward(x)
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-sum(label * ln p)` with `p` floored at [`PROB_FLOOR`].
pub fn cross_entropy_loss(probabilities: &[f64], one_hot: &[f64]) -> f64 {
    probabilities
        .iter()
        .zip(one_hot)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * p.clamp(PROB_FLOOR, 1.0).ln())
        .sum()
}

pub fn one_hot(class: usize, n_classes: usize) -> Vec<f64> {
    (0..n_classes).map(|c| if c == class { 1.0 } else { 0.0 }).collect()
}

/// Loss and exact parameter gradients of softmax cross-entropy for one sample.
pub fn backward(net: &Network, x: &[f64], label: usize) -> Result<(f64, Gradients)> {
    if x.len() != net.input_dim() {
        return Err(Error::LengthMismatch {
            expected: net.input_dim(),
            actual: x.len(),
        });
    }
    let xs = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    net.batch_gradients(xs, &[label])
}

/// Per-quadrature standardization constants, fitted on training waveforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean_i: f64,
    pub std_i: f64,
    pub mean_q: f64,
    pub std_q: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean_i: 0.0,
            std_i: 1.0,
            mean_q: 0.0,
            std_q: 1.0,
        }
    }
}

impl Normalization {
    /// Global mean and standard deviation of all I samples and all Q samples.
    pub fn fit<'a>(shots: impl IntoIterator<Item = &'a Waveform>) -> Result<Self> {
        let (mut n, mut si, mut sq, mut sii, mut sqq) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for w in shots {
            n += w.len();
            for (&i, &q) in w.i_samples.iter().zip(&w.q_samples) {
                si += i;
                sq += q;
                sii += i * i;
                sqq += q * q;
            }
        }
        if n == 0 {
            return Err(Error::Empty("normalization set"));
        }
        let nf = n as f64;
        let (mi, mq) = (si / nf, sq / nf);
        let std = |ss: f64, m: f64| {
            let v = (ss / nf - m * m).max(0.0).sqrt();
            if v > 0.0 {
                v
            } else {
                1.0
            }
        };
        Ok(Self {
            mean_i: mi,
            std_i: std(sii, mi),
            mean_q: mq,
            std_q: std(sqq, mq),
        })
    }

    /// Network input `[I_0 .. I_{n-1}, Q_0 .. Q_{n-1}]`, standardized.
    pub fn features(&self, w: &Waveform) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * w.len());
        x.extend(w.i_samples.iter().map(|v| (v - self.mean_i) / self.std_i));
        x.extend(w.q_samples.iter().map(|v| (v - self.mean_q) / self.std_q));
        x
    }

    pub fn feature_matrix(&self, shots: &[Waveform]) -> Result<Array2<f64>> {
        let width = shots.first().map_or(0, |w| 2 * w.len());
        let mut flat = Vec::with_capacity(width * shots.len());
        for (idx, w) in shots.iter().enumerate() {
            if 2 * w.len() != width || w.i_samples.len() != w.q_samples.len() {
                return Err(Error::at_shot(
                    idx,
                    Error::LengthMismatch {
                        expected: width,
                        actual: w.i_samples.len() + w.q_samples.len(),
                    },
                ));
            }
            flat.extend(self.features(w));
        }
        Ok(Array2::from_shape_vec((shots.len(), width), flat).expect("consistent shape"))
    }
}
