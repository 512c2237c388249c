use std::f64::consts::PI;

use proptest::prelude::*;
use qrt_core::demod::Demodulator;
use qrt_core::signal::{NoiseModel, ReadoutConfig, Synthesizer, SystemParams, Waveform};
use qrt_core::{demodulate, demodulate_batch, seed, IqPoint};
use rand_distr::{Distribution, Normal};

fn tone(cfg: &ReadoutConfig, a: f64, theta: f64) -> Waveform {
    Waveform::tone(a, theta, cfg.n_samples, cfg.if_phase_step())
}

#[test]
fn exact_recovery_over_phase_amplitude_grid() {
    for cfg in [ReadoutConfig::default(), ReadoutConfig::ci()] {
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let theta = -PI + 2.0 * PI * k as f64 / 20.0;
            for a in [0.01, 0.1, 0.5, 1.0, 3.7] {
                let p = demodulate(&tone(&cfg, a, theta), &cfg).unwrap();
                worst = worst
                    .max((p.i - a * theta.cos()).abs())
                    .max((p.q - a * theta.sin()).abs());
            }
        }
        assert!(worst < 1e-9, "worst deviation {worst}");
    }
}

#[test]
fn unit_tones() {
    let cfg = ReadoutConfig::default();
    let p = demodulate(&tone(&cfg, 1.0, 0.0), &cfg).unwrap();
    assert!((p.i - 1.0).abs() < 1e-9 && p.q.abs() < 1e-9);
    let p = demodulate(&tone(&cfg, 1.0, PI / 2.0), &cfg).unwrap();
    assert!(p.i.abs() < 1e-9 && (p.q - 1.0).abs() < 1e-9);
}

#[test]
fn noise_only_shots_average_to_origin() {
    let cfg = ReadoutConfig::ci();
    let sigma = 1.5;
    let normal = Normal::new(0.0, sigma).unwrap();
    let n_shots = 10_000;
    let shots: Vec<Waveform> = (0..n_shots)
        .map(|s| {
            let mut rng = seed::rng(s);
            let i = (0..cfg.n_samples).map(|_| normal.sample(&mut rng)).collect();
            let q = (0..cfg.n_samples).map(|_| normal.sample(&mut rng)).collect();
            Waveform::new(i, q).unwrap()
        })
        .collect();
    let pts = demodulate_batch(&shots, &cfg).unwrap();
    let mean_i = pts.iter().map(|p| p.i).sum::<f64>() / n_shots as f64;
    let mean_q = pts.iter().map(|p| p.q).sum::<f64>() / n_shots as f64;
    let bound = 5.0 * sigma / ((n_shots as usize * cfg.n_samples) as f64 / 2.0).sqrt();
    assert!(mean_i.abs() < bound && mean_q.abs() < bound, "({mean_i}, {mean_q}) vs {bound}");
}

#[test]
fn batch_matches_serial() {
    let cfg = ReadoutConfig::ci();
    assert!(demodulate_batch(&[], &cfg).unwrap().is_empty());
    let synth = Synthesizer::new(&SystemParams::default(), &cfg, &NoiseModel::new(0.7).unwrap()).unwrap();
    let shots: Vec<Waveform> = synth.labeled_set(1000, 5).into_iter().map(|r| r.waveform).collect();
    assert_eq!(shots.len(), 2000);
    let batch = demodulate_batch(&shots, &cfg).unwrap();
    let serial: Vec<IqPoint> = shots.iter().map(|w| demodulate(w, &cfg).unwrap()).collect();
    assert_eq!(batch, serial);
    assert_eq!(demodulate_batch(&shots[..1], &cfg).unwrap()[0], serial[0]);
}

#[test]
fn batch_error_carries_index() {
    let cfg = ReadoutConfig::ci();
    let good = tone(&cfg, 1.0, 0.0);
    let short = Waveform::new(vec![0.0; 8], vec![0.0; 8]).unwrap();
    let err = demodulate_batch(&[good.clone(), good, short], &cfg).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}

#[test]
fn rotation_covariance() {
    let cfg = ReadoutConfig::ci();
    let d = Demodulator::for_config(&cfg);
    let base = tone(&cfg, 0.8, 0.4);
    let p0 = d.demodulate(&base).unwrap();
    for phi in [PI / 6.0, PI / 2.0, PI] {
        // rotate each (I, Q) sample pair by phi
        let (s, c) = phi.sin_cos();
        let i = base.i_samples.iter().zip(&base.q_samples).map(|(i, q)| c * i - s * q).collect();
        let q = base.i_samples.iter().zip(&base.q_samples).map(|(i, q)| s * i + c * q).collect();
        let p = d.demodulate(&Waveform::new(i, q).unwrap()).unwrap();
        let expected = p0.rotate(phi);
        assert!((p.i - expected.i).abs() < 1e-12 && (p.q - expected.q).abs() < 1e-12);
    }
}

fn samples(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

proptest! {
    #[test]
    fn linearity(i1 in samples(64), q1 in samples(64), i2 in samples(64), q2 in samples(64)) {
        // 8 IF periods of 8 samples
        let d = Demodulator::new(250.0, 2e9, 64);
        let w1 = Waveform::new(i1, q1).unwrap();
        let w2 = Waveform::new(i2, q2).unwrap();
        let a = d.demodulate(&w1).unwrap();
        let b = d.demodulate(&w2).unwrap();
        let s = d.demodulate(&w1.add(&w2).unwrap()).unwrap();
        let scale = 1.0 + a.norm() + b.norm();
        prop_assert!((s.i - (a.i + b.i)).abs() <= 1e-12 * scale);
        prop_assert!((s.q - (a.q + b.q)).abs() <= 1e-12 * scale);
    }
}
