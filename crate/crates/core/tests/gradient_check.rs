use qrt_core::neural::{
    backward, cross_entropy_loss, init_network, one_hot, softmax, Network, NetworkConfig,
};
use qrt_core::seed;
use rand::Rng;

const H: f64 = 1e-5;

fn loss_at(net: &Network, x: &[f64], label: usize) -> f64 {
    let p = softmax(&net.forward(x).unwrap());
    cross_entropy_loss(&p, &one_hot(label, net.output_dim()))
}

/// Largest relative error between backprop and central differences, over
/// every weight and bias.
fn max_relative_error(net: &Network, x: &[f64], label: usize) -> f64 {
    let (_, grads) = backward(net, x, label).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (k, layer) in net.layers.iter().enumerate() {
        for ((r, c), &w) in layer.weights.indexed_iter() {
            probe.layers[k].weights[[r, c]] = w + H;
            let up = loss_at(&probe, x, label);
            probe.layers[k].weights[[r, c]] = w - H;
            let down = loss_at(&probe, x, label);
            probe.layers[k].weights[[r, c]] = w;
            worst = worst.max(rel((up - down) / (2.0 * H), grads[k].weights[[r, c]]));
        }
        for (j, &b) in layer.bias.indexed_iter() {
            probe.layers[k].bias[j] = b + H;
            let up = loss_at(&probe, x, label);
            probe.layers[k].bias[j] = b - H;
            let down = loss_at(&probe, x, label);
            probe.layers[k].bias[j] = b;
            worst = worst.max(rel((up - down) / (2.0 * H), grads[k].bias[j]));
        }
    }
    worst
}

fn rel(numeric: f64, analytic: f64) -> f64 {
    let scale = numeric.abs().max(analytic.abs());
    if scale < 1e-7 {
        // both effectively zero; absolute error is the meaningful quantity
        (numeric - analytic).abs()
    } else {
        (numeric - analytic).abs() / scale
    }
}

/// Random biases keep ReLU units away from their kink for most inputs.
fn random_net(rng: &mut impl Rng, cfg: NetworkConfig) -> Network {
    let mut net = init_network(&cfg).unwrap();
    for layer in &mut net.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    net
}

#[test]
fn backprop_matches_finite_differences_on_toy_net() {
    let mut rng = seed::rng(11);
    let net = random_net(
        &mut rng,
        NetworkConfig {
            input_dim: 8,
            hidden_dims: vec![5, 3],
            output_dim: 2,
            init_seed: 4,
            ..NetworkConfig::ci()
        },
    );
    for label in 0..2 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = max_relative_error(&net, &x, label);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn backprop_matches_finite_differences_on_random_configs() {
    let mut rng = seed::rng(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let depth = rng.random_range(1..=3);
        let cfg = NetworkConfig {
            input_dim: rng.random_range(1..=10),
            hidden_dims: (0..depth).map(|_| rng.random_range(1..=10)).collect(),
            output_dim: rng.random_range(2..=4),
            init_seed: trial,
            ..NetworkConfig::ci()
        };
        let net = random_net(&mut rng, cfg);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = rng.random_range(0..net.output_dim());
        worst = worst.max(max_relative_error(&net, &x, label));
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}
