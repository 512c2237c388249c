use serde::{Deserialize, Serialize};

use super::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    /// Number of completed steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self {
            m: net.zeros_like(),
            v: net.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; advances `state.t` by one.
pub fn adam_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut AdamState,
    params: &AdamParams,
) -> Result<()> {
    if grads.len() != net.layers.len() || state.m.len() != net.layers.len() {
        return Err(Error::LengthMismatch {
            expected: net.layers.len(),
            actual: grads.len(),
        });
    }
    for ((layer, g), (m, v)) in net
        .layers
        .iter()
        .zip(grads)
        .zip(state.m.iter().zip(&state.v))
    {
        if layer.weights.dim() != g.weights.dim()
            || m.weights.dim() != g.weights.dim()
            || v.weights.dim() != g.weights.dim()
        {
            return Err(Error::invalid("gradients", "shape does not match network"));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 / (1.0 - params.beta1.powi(t));
    let c2 = 1.0 / (1.0 - params.beta2.powi(t));
    let (b1, b2, lr, eps) = (params.beta1, params.beta2, params.learning_rate, params.epsilon);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m * c1) / ((*v * c2).sqrt() + eps);
    };
    for ((layer, g), (m, v)) in net
        .layers
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        ndarray::Zip::from(&mut layer.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}
