//! Digital demodulation of IF waveforms to a single IQ-plane point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::signal::{ReadoutConfig, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IqPoint {
    pub i: f64,
    pub q: f64,
}

impl IqPoint {
    pub fn new(i: f64, q: f64) -> Self {
        Self { i, q }
    }

    pub fn dot(&self, other: &IqPoint) -> f64 {
        self.i * other.i + self.q * other.q
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sub(&self, other: &IqPoint) -> IqPoint {
        IqPoint::new(self.i - other.i, self.q - other.q)
    }

    /// Rotates counter-clockwise by `phi` radians.
    pub fn rotate(&self, phi: f64) -> IqPoint {
        let (s, c) = phi.sin_cos();
        IqPoint::new(c * self.i - s * self.q, s * self.i + c * self.q)
    }
}

/// Precomputed reference tone for a fixed window length.
#[derive(Debug, Clone)]
pub struct Demodulator {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Demodulator {
    pub fn new(omega_if_mhz: f64, sample_rate: f64, n_samples: usize) -> Self {
        let step = 2.0 * std::f64::consts::PI * omega_if_mhz * 1e6 / sample_rate;
        let (sin, cos) = (0..n_samples).map(|n| (step * n as f64).sin_cos()).unzip();
        Self { cos, sin }
    }

    pub fn for_config(config: &ReadoutConfig) -> Self {
        Self::new(config.omega_if, config.sample_rate, config.n_samples)
    }

    pub fn n_samples(&self) -> usize {
        self.cos.len()
    }

    /// Projects both quadratures onto the IF reference and averages:
    /// `I = mean(B_I cos + B_Q sin)`, `Q = mean(B_Q cos - B_I sin)`.
    /// A noiseless tone `A cos(wn + theta)`, `A sin(wn + theta)` maps to
    /// `(A cos theta, A sin theta)`.
    pub fn demodulate(&self, w: &Waveform) -> Result<IqPoint> {
        if w.i_samples.len() != w.q_samples.len() {
            return Err(Error::LengthMismatch {
                expected: w.i_samples.len(),
                actual: w.q_samples.len(),
            });
        }
        if w.len() != self.n_samples() {
            return Err(Error::LengthMismatch {
                expected: self.n_samples(),
                actual: w.len(),
            });
        }
        let (mut i_acc, mut q_acc) = (0.0, 0.0);
        for (((bi, bq), c), s) in w
            .i_samples
            .iter()
            .zip(&w.q_samples)
            .zip(&self.cos)
            .zip(&self.sin)
        {
            i_acc += bi * c + bq * s;
            q_acc += bq * c - bi * s;
        }
        let norm = 1.0 / self.n_samples() as f64;
        Ok(IqPoint::new(i_acc * norm, q_acc * norm))
    }

    pub fn demodulate_batch(&self, shots: &[Waveform]) -> Result<Vec<IqPoint>> {
        par::try_map_slice(shots, |idx, w| {
            self.demodulate(w).map_err(|e| Error::at_shot(idx, e))
        })
    }
}

/// Demodulates one shot with the window described by `config`.
pub fn demodulate(w: &Waveform, config: &ReadoutConfig) -> Result<IqPoint> {
    Demodulator::for_config(config).demodulate(w)
}

/// Element-wise [`demodulate`], order preserved; errors carry the shot index.
pub fn demodulate_batch(shots: &[Waveform], config: &ReadoutConfig) -> Result<Vec<IqPoint>> {
    Demodulator::for_config(config).demodulate_batch(shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cfg() -> ReadoutConfig {
        ReadoutConfig::default()
    }

    #[test]
    fn unit_tone_at_zero_and_quarter_phase() {
        let c = cfg();
        let p = demodulate(&Waveform::tone(1.0, 0.0, c.n_samples, c.if_phase_step()), &c).unwrap();
        assert_abs_diff_eq!(p.i, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.q, 0.0, epsilon = 1e-9);
        let p = demodulate(&Waveform::tone(1.0, PI / 2.0, c.n_samples, c.if_phase_step()), &c)
            .unwrap();
        assert_abs_diff_eq!(p.i, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.q, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn structural_errors() {
        let c = cfg();
        let w = Waveform {
            i_samples: vec![0.0; c.n_samples],
            q_samples: vec![0.0; c.n_samples - 1],
        };
        assert!(matches!(demodulate(&w, &c), Err(Error::LengthMismatch { .. })));
        let short = Waveform::tone(1.0, 0.0, 10, c.if_phase_step());
        let good = Waveform::tone(1.0, 0.0, c.n_samples, c.if_phase_step());
        let err = demodulate_batch(&[good, short], &c).unwrap_err();
        assert!(matches!(err, Error::AtShot { index: 1, .. }));
    }

    #[test]
    fn batch_edge_cases() {
        let c = cfg();
        assert!(demodulate_batch(&[], &c).unwrap().is_empty());
        let w = Waveform::tone(0.3, 1.0, c.n_samples, c.if_phase_step());
        assert_eq!(demodulate_batch(&[w.clone()], &c).unwrap(), vec![demodulate(&w, &c).unwrap()]);
    }

    #[test]
    fn rotate_matches_phase_shift() {
        let p = IqPoint::new(1.0, 0.0).rotate(PI / 2.0);
        assert_abs_diff_eq!(p.i, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.q, 1.0, epsilon = 1e-15);
    }
}
