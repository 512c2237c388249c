use ndarray::Array2;
use proptest::prelude::*;
use qrt_core::neural::{
    init_network, softmax, train, Activation, Dense, Network, NetworkConfig, TrainConfig,
    TrainingSet,
};
use qrt_core::seed;
use rand::Rng;

/// Two Gaussian blobs in the plane, far enough apart to be separable.
fn blobs(n_per_class: usize, seed_value: u64) -> TrainingSet {
    let mut rng = seed::rng(seed_value);
    let mut x = Array2::zeros((2 * n_per_class, 2));
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for r in 0..2 * n_per_class {
        let class = r % 2;
        let c = if class == 0 { -2.0 } else { 2.0 };
        x[[r, 0]] = c + rng.random_range(-1.0..1.0);
        x[[r, 1]] = -c + rng.random_range(-1.0..1.0);
        labels.push(class);
    }
    TrainingSet::new(x, labels).unwrap()
}

fn toy_config(seed_value: u64) -> NetworkConfig {
    NetworkConfig {
        input_dim: 2,
        hidden_dims: vec![8, 4],
        output_dim: 2,
        activation: Activation::Relu,
        init_seed: seed_value,
    }
}

fn toy_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        max_epochs: 20,
        shuffle_seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_data_is_learned_within_twenty_epochs() {
    let data = blobs(100, 1);
    let (_, report) = train(init_network(&toy_config(7)).unwrap(), &data, &toy_train_config()).unwrap();
    assert!(report.epochs <= 20);
    assert_eq!(report.validation_accuracy.iter().cloned().fold(0.0, f64::max), 1.0);
    assert!(report.train_loss.last().unwrap() < &report.train_loss[0]);
    assert_eq!(report.n_validation, 40);
    assert_eq!(report.train_loss.len(), report.epochs);
    assert_eq!(report.validation_loss.len(), report.epochs);
}

#[test]
fn training_is_deterministic() {
    let data = blobs(60, 2);
    let run = || train(init_network(&toy_config(9)).unwrap(), &data, &toy_train_config()).unwrap();
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn thread_count_does_not_change_results() {
    let data = blobs(200, 4);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(init_network(&toy_config(5)).unwrap(), &data, &toy_train_config()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn single_class_and_tiny_sets_rejected() {
    let x = Array2::zeros((20, 2));
    let one = TrainingSet::new(x.clone(), vec![1; 20]).unwrap();
    assert!(train(init_network(&toy_config(1)).unwrap(), &one, &toy_train_config()).is_err());
    let tiny = TrainingSet::new(Array2::zeros((4, 2)), vec![0, 1, 0, 1]).unwrap();
    assert!(train(init_network(&toy_config(1)).unwrap(), &tiny, &toy_train_config()).is_err());
    assert!(TrainingSet::new(x, vec![0; 3]).is_err());
}

#[test]
fn bias_free_single_hidden_layer_is_positively_homogeneous() {
    let mut net = init_network(&NetworkConfig {
        input_dim: 5,
        hidden_dims: vec![6],
        output_dim: 2,
        activation: Activation::Relu,
        init_seed: 12,
    })
    .unwrap();
    for layer in &mut net.layers {
        layer.bias.fill(0.0);
    }
    let x = [0.4, -1.0, 2.2, 0.1, -0.3];
    let base = net.forward(&x).unwrap();
    for c in [0.5, 2.0, 13.0] {
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        for (a, b) in net.forward(&scaled).unwrap().iter().zip(&base) {
            assert!((a - c * b).abs() <= 1e-12 * (1.0 + (c * b).abs()));
        }
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let net = init_network(&toy_config(1)).unwrap();
    assert!(net.forward(&[1.0; 3]).is_err());
    let bad = vec![Dense::zeros(2, 3), Dense::zeros(4, 2)];
    assert!(Network::from_layers(toy_config(1), bad).is_err());
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0..700.0f64, 1..8), shift in -100.0..100.0f64) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
