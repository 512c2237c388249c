use proptest::prelude::*;
use qrt_core::discriminators::{train_trmnn, trmnn_similarity};
use qrt_core::experiments::{assignment_table, train_backends, Backends};
use qrt_core::neural::{init_network, softmax, NetworkConfig, TrainConfig};
use qrt_core::signal::{
    calibrate_noise_to_fidelity, Eigenstate, NoiseModel, ReadoutConfig, ShotRecord, Synthesizer,
    SystemParams,
};
use qrt_core::{
    infer_batch, probability_estimate, Backend, FnnModel, ModuleRegistry, ShotEstimator,
    SimilarityPair, TrmnnModule,
};

fn small_net(seed: u64) -> NetworkConfig {
    NetworkConfig {
        input_dim: 512,
        hidden_dims: vec![32, 16],
        init_seed: seed,
        ..NetworkConfig::ci()
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        max_epochs: 10,
        shuffle_seed: 1,
        ..TrainConfig::default()
    }
}

fn labeled(sigma: f64, n: usize, seed: u64) -> (Synthesizer, Vec<ShotRecord>) {
    let synth = Synthesizer::new(
        &SystemParams::default(),
        &ReadoutConfig::ci(),
        &NoiseModel::new(sigma).unwrap(),
    )
    .unwrap();
    let set = synth.labeled_set(n, seed);
    (synth, set)
}

#[test]
fn noiseless_data_is_classified_perfectly() {
    let (_, train) = labeled(0.0, 100, 1);
    let (_, test) = labeled(0.0, 100, 2);
    let (b, _) = train_backends(
        &train,
        &ReadoutConfig::ci(),
        &small_net(0),
        &quick_train(),
        "q0",
        &Backend::ALL,
        3,
    )
    .unwrap();
    for (backend, r) in assignment_table(&b, &test).unwrap() {
        assert_eq!(r.assignment_fidelity, 1.0, "{backend}");
    }
}

#[test]
fn exemplars_and_output_ranges() {
    let (synth, train) = labeled(0.3, 150, 4);
    let (fnn, _) = FnnModel::train(&train, &small_net(5), &quick_train()).unwrap();
    let (trmnn, _) = TrmnnModule::train("q0", &train, &small_net(5), &quick_train()).unwrap();
    let excited = train.iter().find(|r| r.label == Some(Eigenstate::Excited)).unwrap();
    let ground = train.iter().find(|r| r.label == Some(Eigenstate::Ground)).unwrap();
    assert!(fnn.infer_shot(&excited.waveform).unwrap() > 0.5);
    let s = trmnn_similarity(&trmnn, &ground.waveform).unwrap();
    assert!(s.s_g > s.s_e);
    assert_eq!(s, trmnn.similarity(&ground.waveform).unwrap());
    for w in synth.population_set(0.5, 50, 6) {
        let p = fnn.infer_shot(&w).unwrap();
        assert!(p > 0.0 && p < 1.0);
        let s = trmnn.similarity(&w).unwrap();
        assert!(s.s_g.is_finite() && s.s_e.is_finite());
    }
    let short = qrt_core::Waveform::new(vec![0.0; 10], vec![0.0; 10]).unwrap();
    assert!(fnn.infer_shot(&short).is_err());
    assert!(trmnn.similarity(&short).is_err());
}

#[test]
fn seeded_retrain_is_identical() {
    let (_, train) = labeled(0.5, 80, 7);
    let a = FnnModel::train(&train, &small_net(1), &quick_train()).unwrap();
    let b = FnnModel::train(&train, &small_net(1), &quick_train()).unwrap();
    assert_eq!(a, b);
    let c = TrmnnModule::train("q", &train, &small_net(1), &quick_train()).unwrap();
    let d = TrmnnModule::train("q", &train, &small_net(1), &quick_train()).unwrap();
    assert_eq!(c, d);
}

#[test]
fn heads_agree_on_shared_parameters() {
    let (synth, _) = labeled(1.0, 1, 0);
    let network = init_network(&small_net(21)).unwrap();
    let normalization = Default::default();
    let fnn = FnnModel {
        network: network.clone(),
        normalization,
    };
    let trmnn = TrmnnModule {
        qubit_id: "q0".into(),
        network,
        normalization,
    };
    for w in synth.population_set(0.5, 400, 8) {
        assert_eq!(fnn.classify(&w).unwrap(), trmnn.classify(&w).unwrap());
    }
    let logits = [0.7, 0.7];
    assert_eq!(softmax(&logits)[1], 0.5);
}

#[test]
fn registry_modules_are_isolated() {
    let (synth, a) = labeled(0.4, 60, 10);
    let (_, b) = labeled(0.8, 60, 11);
    let mut reg = ModuleRegistry::new();
    train_trmnn(&mut reg, "q0", &a, &small_net(1), &quick_train()).unwrap();
    train_trmnn(&mut reg, "q1", &b, &small_net(2), &quick_train()).unwrap();
    assert_eq!(reg.len(), 2);
    let q0_before = reg.get("q0").unwrap().clone();
    let probe = synth.population_set(0.5, 20, 3);
    let before: Vec<f64> = probe.iter().map(|w| reg.get("q0").unwrap().estimate(w).unwrap()).collect();

    // retraining q1 replaces it and leaves q0 untouched
    let old = reg.register(TrmnnModule::train("q1", &a, &small_net(9), &quick_train()).unwrap().0);
    assert!(old.is_some());
    assert_eq!(reg.len(), 2);
    assert_eq!(reg.get("q0").unwrap(), &q0_before);
    let after: Vec<f64> = probe.iter().map(|w| reg.get("q0").unwrap().estimate(w).unwrap()).collect();
    assert_eq!(before, after);

    let dir = tempfile::tempdir().unwrap();
    reg.set_dataset_hash("q0", "abc");
    let manifest = reg.save(dir.path()).unwrap();
    assert_eq!(manifest.modules["q0"].dataset_hash, "abc");
    assert!(dir.path().join("registry.json").exists());
    let loaded = ModuleRegistry::load(dir.path()).unwrap();
    assert_eq!(loaded.get("q0"), reg.get("q0"));
    assert_eq!(loaded.get("q1"), reg.get("q1"));
}

#[test]
fn infer_batch_statistics() {
    let (synth, train) = labeled(0.5, 80, 12);
    let (trmnn, _) = TrmnnModule::train("q0", &train, &small_net(3), &quick_train()).unwrap();
    let w = synth.shot(Eigenstate::Excited, 1);
    let same = infer_batch(&trmnn, &vec![w; 12]).unwrap();
    assert_eq!(same.variance, 0.0);
    assert_eq!(same.m, 12);
    let shots = synth.population_set(0.4, 100, 2);
    let values = trmnn.estimate_batch(&shots).unwrap();
    let est = infer_batch(&trmnn, &shots).unwrap();
    let (lo, hi) = values.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(est.mean >= lo && est.mean <= hi);
    assert!(infer_batch(&trmnn, &[]).is_err());
}

#[test]
fn trmnn_variance_below_raw_at_half_population() {
    let params = SystemParams::default();
    let cfg = ReadoutConfig::ci();
    let cal = calibrate_noise_to_fidelity(0.801, &params, &cfg, 2000, 1).unwrap();
    let synth = Synthesizer::new(&params, &cfg, &cal.noise).unwrap();
    let train = synth.labeled_set(1000, 2);
    let (b, _): (Backends, _) = train_backends(
        &train,
        &cfg,
        &NetworkConfig::ci(),
        &TrainConfig::default(),
        "q0",
        &[Backend::Raw, Backend::Trmnn],
        3,
    )
    .unwrap();
    let shots = synth.population_set(0.5, 600, 4);
    let raw = infer_batch(b.raw.as_ref().unwrap(), &shots).unwrap();
    let trmnn = infer_batch(b.trmnn.as_ref().unwrap(), &shots).unwrap();
    assert!(trmnn.variance < raw.variance, "{} vs {}", trmnn.variance, raw.variance);
}

proptest! {
    #[test]
    fn probability_estimate_is_bounded(s_g in -1e6..1e6f64, s_e in -1e6..1e6f64) {
        let p = probability_estimate(SimilarityPair { s_g, s_e });
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(probability_estimate(SimilarityPair { s_g, s_e: s_g }), 0.5);
    }
}
