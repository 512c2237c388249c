//! Dispersive-readout waveform synthesis.
//!
//! A qubit in state `g` or `e` pulls the resonator to `omega_r -/+ chi`. The probe
//! at `omega_ro` picks up the single-pole transmission amplitude and phase of
//! the pulled resonator, and after heterodyne mixing each shot is a tone at the
//! intermediate frequency plus white Gaussian noise on both quadratures.

use std::f64::consts::PI;

use log::warn;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;

/// Device constants. Frequencies of the qubit and resonator in GHz, coupling
/// and linewidth in MHz, coherence times in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub omega_r: f64,
    pub omega_q: f64,
    pub g: f64,
    pub kappa: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Default for SystemParams {
    /// The single-xmon device used for the reference measurements.
    fn default() -> Self {
        Self {
            omega_r: 5.331,
            omega_q: 3.842,
            g: 85.0,
            kappa: 1.1,
            t1: 26.0,
            t2: 5.0,
        }
    }
}

impl SystemParams {
    pub fn new(omega_r: f64, omega_q: f64, g: f64, kappa: f64, t1: f64, t2: f64) -> Result<Self> {
        let p = Self {
            omega_r,
            omega_q,
            g,
            kappa,
            t1,
            t2,
        };
        p.validate()?;
        if !p.is_dispersive() {
            warn!(
                "g/|detuning| = {:.3} >= 0.1: outside the dispersive regime",
                p.g / p.detuning_mhz().abs()
            );
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega_r, self.omega_q, self.g, self.kappa, self.t1, self.t2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("system", "all parameters must be finite"));
        }
        if self.omega_r == self.omega_q {
            return Err(Error::invalid("omega_q", "qubit and resonator are degenerate"));
        }
        for (name, v) in [
            ("g", self.g),
            ("kappa", self.kappa),
            ("t1", self.t1),
            ("t2", self.t2),
        ] {
            if v <= 0.0 {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Resonator minus qubit frequency, in MHz.
    pub fn detuning_mhz(&self) -> f64 {
        (self.omega_r - self.omega_q) * 1e3
    }

    /// `g / |detuning| < 0.1`.
    pub fn is_dispersive(&self) -> bool {
        self.g / self.detuning_mhz().abs() < 0.1
    }
}

/// Dispersive shift `g^2 / detuning` in MHz, signed like the detuning.
pub fn dispersive_shift(params: &SystemParams) -> f64 {
    params.g * params.g / params.detuning_mhz()
}

/// Probe and acquisition settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Probe frequency, GHz.
    pub omega_ro: f64,
    /// Intermediate frequency, MHz.
    pub omega_if: f64,
    /// ADC rate, samples per second.
    pub sample_rate: f64,
    /// Points per quadrature per shot.
    pub n_samples: usize,
    pub s0: f64,
    pub l0: f64,
    /// LO phase offset, radians.
    pub theta_lo: f64,
}

impl Default for ReadoutConfig {
    /// 2000 points per quadrature over 1 us, 50 MHz IF, probe on the bare resonance.
    fn default() -> Self {
        Self {
            omega_ro: SystemParams::default().omega_r,
            omega_if: 50.0,
            sample_rate: 2e9,
            n_samples: 2000,
            s0: 8.0,
            l0: 1.0,
            theta_lo: 0.0,
        }
    }
}

impl ReadoutConfig {
    /// Reduced-size acquisition: 256 points per quadrature, 62.5 MHz IF (8 periods).
    pub fn ci() -> Self {
        Self {
            omega_if: 62.5,
            n_samples: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::invalid("n_samples", "need at least 2 samples"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        if !(self.omega_if.is_finite() && self.omega_if > 0.0) {
            return Err(Error::invalid("omega_if", "must be positive"));
        }
        if self.sample_rate <= 2.0 * self.omega_if * 1e6 {
            return Err(Error::invalid(
                "sample_rate",
                format!(
                    "{} S/s does not resolve a {} MHz tone",
                    self.sample_rate, self.omega_if
                ),
            ));
        }
        let periods = self.if_periods();
        if (periods - periods.round()).abs() > 1e-9 * periods.max(1.0) {
            return Err(Error::invalid(
                "n_samples",
                format!("window holds {periods} IF periods; must be an integer"),
            ));
        }
        for (name, v) in [("s0", self.s0), ("l0", self.l0), ("theta_lo", self.theta_lo)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if !self.omega_ro.is_finite() {
            return Err(Error::invalid("omega_ro", "must be finite"));
        }
        Ok(())
    }

    /// Number of IF periods in one acquisition window.
    pub fn if_periods(&self) -> f64 {
        self.omega_if * 1e6 * self.n_samples as f64 / self.sample_rate
    }

    /// IF phase advance per sample, radians.
    pub fn if_phase_step(&self) -> f64 {
        2.0 * PI * self.omega_if * 1e6 / self.sample_rate
    }
}

/// White Gaussian noise, i.i.d. per sample per quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        let n = Self { sigma };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// A measurement outcome: one of the two sigma_z eigenstates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eigenstate {
    Ground,
    Excited,
}

impl Eigenstate {
    pub fn index(self) -> usize {
        match self {
            Eigenstate::Ground => 0,
            Eigenstate::Excited => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Eigenstate::Ground => Eigenstate::Excited,
            Eigenstate::Excited => Eigenstate::Ground,
        }
    }
}

/// Prepared qubit state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QubitState {
    Ground,
    Excited,
    Superposition(f64),
}

impl QubitState {
    pub fn superposition(p_excited: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_excited) {
            return Err(Error::invalid("p_excited", format!("{p_excited} is outside [0, 1]")));
        }
        Ok(QubitState::Superposition(p_excited))
    }

    pub fn p_excited(&self) -> f64 {
        match *self {
            QubitState::Ground => 0.0,
            QubitState::Excited => 1.0,
            QubitState::Superposition(p) => p,
        }
    }
}

impl From<Eigenstate> for QubitState {
    fn from(s: Eigenstate) -> Self {
        match s {
            Eigenstate::Ground => QubitState::Ground,
            Eigenstate::Excited => QubitState::Excited,
        }
    }
}

/// One shot: `n_samples` I points and `n_samples` Q points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub i_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
}

impl Waveform {
    pub fn new(i_samples: Vec<f64>, q_samples: Vec<f64>) -> Result<Self> {
        if i_samples.len() != q_samples.len() {
            return Err(Error::LengthMismatch {
                expected: i_samples.len(),
                actual: q_samples.len(),
            });
        }
        if i_samples.iter().chain(&q_samples).any(|v| !v.is_finite()) {
            return Err(Error::invalid("waveform", "non-finite sample"));
        }
        Ok(Self {
            i_samples,
            q_samples,
        })
    }

    /// A noiseless IF tone of amplitude `amplitude` and phase `phase`.
    pub fn tone(amplitude: f64, phase: f64, n_samples: usize, phase_step: f64) -> Self {
        let (i_samples, q_samples) = (0..n_samples)
            .map(|n| {
                let arg = phase_step * n as f64 + phase;
                (amplitude * arg.cos(), amplitude * arg.sin())
            })
            .unzip();
        Self {
            i_samples,
            q_samples,
        }
    }

    pub fn len(&self) -> usize {
        self.i_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_samples.is_empty()
    }

    /// Pointwise sum of two waveforms.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(Waveform {
            i_samples: sum(&self.i_samples, &other.i_samples),
            q_samples: sum(&self.q_samples, &other.q_samples),
        })
    }
}

/// A waveform with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub waveform: Waveform,
    /// `None` for blind shots.
    pub label: Option<Eigenstate>,
    /// Rabi drive duration in ns, if this shot belongs to a Rabi sweep.
    pub time_step: Option<f64>,
    pub seed: u64,
}

/// Rabi sweep settings. Times in ns, angular frequency in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiConfig {
    pub n_steps: usize,
    pub t_total: f64,
    pub omega_rabi: f64,
    #[serde(default)]
    pub envelope_t2: Option<f64>,
    /// Number of full Rabi traces (shots per time step).
    pub shots_per_step: usize,
}

impl Default for RabiConfig {
    /// 40 steps over 200 ns, two full oscillations, 600 traces.
    fn default() -> Self {
        Self {
            n_steps: 40,
            t_total: 200.0,
            omega_rabi: 4.0 * PI / 200.0,
            envelope_t2: None,
            shots_per_step: 600,
        }
    }
}

impl RabiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::invalid("n_steps", "need at least 2 time steps"));
        }
        if !(self.t_total.is_finite() && self.t_total > 0.0) {
            return Err(Error::invalid("t_total", "must be positive"));
        }
        if !(self.omega_rabi.is_finite() && self.omega_rabi > 0.0) {
            return Err(Error::invalid("omega_rabi", "must be positive"));
        }
        if let Some(t2) = self.envelope_t2 {
            if !(t2 > 0.0) {
                return Err(Error::invalid("envelope_t2", "must be positive"));
            }
        }
        if self.shots_per_step == 0 {
            return Err(Error::invalid("shots_per_step", "must be at least 1"));
        }
        Ok(())
    }

    /// Drive durations `k * t_total / n_steps` for `k = 0..n_steps`.
    pub fn times(&self) -> Vec<f64> {
        let dt = self.t_total / self.n_steps as f64;
        (0..self.n_steps).map(|k| k as f64 * dt).collect()
    }
}

/// Excited-state population after driving for `t` ns.
pub fn rabi_population(t: f64, rabi: &RabiConfig) -> f64 {
    let p = match rabi.envelope_t2 {
        None => (0.5 * rabi.omega_rabi * t).sin().powi(2),
        Some(t2) => 0.5 * (1.0 - (-t / t2).exp() * (rabi.omega_rabi * t).cos()),
    };
    p.clamp(0.0, 1.0)
}

/// Steady-state probe amplitude and phase for a qubit in `state`.
pub fn resonator_response(
    params: &SystemParams,
    config: &ReadoutConfig,
    state: Eigenstate,
) -> (f64, f64) {
    let chi = dispersive_shift(params);
    let center = match state {
        Eigenstate::Ground => -chi,
        Eigenstate::Excited => chi,
    };
    // probe offset from the pulled resonance, MHz
    let offset = (config.omega_ro - params.omega_r) * 1e3 - center;
    let x = 2.0 * offset / params.kappa;
    let amplitude = config.s0 * config.l0 / 8.0 / (1.0 + x * x).sqrt();
    (amplitude, -x.atan())
}

/// Draws the collapsed eigenstate of a qubit with excited population `p_excited`.
pub fn sample_collapsed_state(p_excited: f64, seed: u64) -> Eigenstate {
    let u: f64 = seed::rng(seed).random();
    if u < p_excited {
        Eigenstate::Excited
    } else {
        Eigenstate::Ground
    }
}

/// Cached noiseless templates for both eigenstates.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    config: ReadoutConfig,
    noise: NoiseModel,
    templates: [Waveform; 2],
}

impl Synthesizer {
    pub fn new(params: &SystemParams, config: &ReadoutConfig, noise: &NoiseModel) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        noise.validate()?;
        let template = |state| {
            let (a, theta) = resonator_response(params, config, state);
            Waveform::tone(
                a,
                theta - config.theta_lo,
                config.n_samples,
                config.if_phase_step(),
            )
        };
        Ok(Self {
            config: *config,
            noise: *noise,
            templates: [template(Eigenstate::Ground), template(Eigenstate::Excited)],
        })
    }

    pub fn config(&self) -> &ReadoutConfig {
        &self.config
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn template(&self, state: Eigenstate) -> &Waveform {
        &self.templates[state.index()]
    }

    /// One noisy shot; noise drawn as interleaved (I, Q) pairs from `seed`.
    pub fn shot(&self, state: Eigenstate, seed: u64) -> Waveform {
        let template = self.template(state);
        let sigma = self.noise.sigma;
        let n = self.config.n_samples;
        let mut i_samples = Vec::with_capacity(n);
        let mut q_samples = Vec::with_capacity(n);
        let mut rng = seed::rng(seed);
        for k in 0..n {
            let ni: f64 = rng.sample(StandardNormal);
            let nq: f64 = rng.sample(StandardNormal);
            i_samples.push(template.i_samples[k] + sigma * ni);
            q_samples.push(template.q_samples[k] + sigma * nq);
        }
        Waveform {
            i_samples,
            q_samples,
        }
    }

    /// A shot of a qubit with excited population `p`: collapse, then read out.
    /// Returns the collapsed state alongside the waveform.
    pub fn population_shot(&self, p_excited: f64, seed: u64) -> (Eigenstate, Waveform) {
        let state = sample_collapsed_state(p_excited, seed::derive(seed, "collapse", 0));
        (state, self.shot(state, seed::derive(seed, "noise", 0)))
    }

    /// `n_per_state` ground shots followed by `n_per_state` excited shots, labelled.
    pub fn labeled_set(&self, n_per_state: usize, base_seed: u64) -> Vec<ShotRecord> {
        par::map_range(2 * n_per_state, |i| {
            let label = if i < n_per_state {
                Eigenstate::Ground
            } else {
                Eigenstate::Excited
            };
            let seed = seed::derive(base_seed, "shot", i as u64);
            ShotRecord {
                waveform: self.shot(label, seed),
                label: Some(label),
                time_step: None,
                seed,
            }
        })
    }

    /// `m` blind shots of a qubit with excited population `p_excited`.
    pub fn population_set(&self, p_excited: f64, m: usize, base_seed: u64) -> Vec<Waveform> {
        par::map_range(m, |i| {
            self.population_shot(p_excited, seed::derive(base_seed, "population", i as u64))
                .1
        })
    }

    /// Rabi traces, trace-major: record `trace * n_steps + step`.
    pub fn rabi_set(&self, rabi: &RabiConfig, base_seed: u64) -> Result<Vec<ShotRecord>> {
        rabi.validate()?;
        let times = rabi.times();
        let n_steps = rabi.n_steps;
        Ok(par::map_range(rabi.shots_per_step * n_steps, |i| {
            let t = times[i % n_steps];
            let seed = seed::derive(base_seed, "rabi", i as u64);
            let (_, waveform) = self.population_shot(rabi_population(t, rabi), seed);
            ShotRecord {
                waveform,
                label: None,
                time_step: Some(t),
                seed,
            }
        }))
    }
}

/// Synthesizes one shot of a qubit in `state`.
pub fn synthesize_shot(
    state: Eigenstate,
    params: &SystemParams,
    config: &ReadoutConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Waveform> {
    Ok(Synthesizer::new(params, config, noise)?.shot(state, seed))
}

/// Synthesizes `rabi.shots_per_step` full Rabi traces.
pub fn synthesize_rabi_dataset(
    rabi: &RabiConfig,
    params: &SystemParams,
    config: &ReadoutConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    Synthesizer::new(params, config, noise)?.rabi_set(rabi, seed)
}

/// Result of inverting the sigma -> raw fidelity map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub noise: NoiseModel,
    pub target_fa: f64,
    pub measured_fa: f64,
    pub iterations: usize,
    pub shots_per_state: usize,
}

/// Raw-readout fidelity at a given sigma: discriminant fitted on one fresh set
/// and scored on another, both with `shots_per_state` shots per state.
pub fn raw_fidelity_at(
    sigma: f64,
    params: &SystemParams,
    config: &ReadoutConfig,
    shots_per_state: usize,
    seed: u64,
) -> Result<f64> {
    use crate::demod::demodulate_batch;
    use crate::raw_readout::{calibrate_labeled, evaluate_labeled};

    let synth = Synthesizer::new(params, config, &NoiseModel::new(sigma)?)?;
    let fit = synth.labeled_set(shots_per_state, seed::derive(seed, "cal-fit", 0));
    let eval = synth.labeled_set(shots_per_state, seed::derive(seed, "cal-eval", 0));
    let iq = |set: &[ShotRecord]| -> Result<Vec<_>> {
        let w: Vec<Waveform> = set.iter().map(|r| r.waveform.clone()).collect();
        demodulate_batch(&w, config)
    };
    let labels = |set: &[ShotRecord]| -> Vec<Eigenstate> {
        set.iter().map(|r| r.label.expect("labeled set")).collect()
    };
    let disc = calibrate_labeled(&iq(&fit)?, &labels(&fit))?;
    Ok(evaluate_labeled(&disc, &iq(&eval)?, &labels(&eval))?.assignment_fidelity()?)
}

/// Acceptable distance between calibrated and target fidelity.
pub const CALIBRATION_TOLERANCE: f64 = 0.01;

/// Bisects sigma until the raw-readout fidelity is within
/// [`CALIBRATION_TOLERANCE`] of `target_fa`.
pub fn calibrate_noise_to_fidelity(
    target_fa: f64,
    params: &SystemParams,
    config: &ReadoutConfig,
    shots_per_state: usize,
    seed: u64,
) -> Result<NoiseCalibration> {
    if !(target_fa > 0.5 && target_fa < 1.0) {
        return Err(Error::invalid("target_fa", format!("{target_fa} not in (0.5, 1)")));
    }
    if shots_per_state < 2000 {
        return Err(Error::invalid(
            "shots_per_state",
            format!("{shots_per_state} < 2000 calibration shots per state"),
        ));
    }
    let fa = |sigma: f64| raw_fidelity_at(sigma, params, config, shots_per_state, seed);

    let noiseless = fa(0.0)?;
    if noiseless < target_fa {
        return Err(Error::Unreachable {
            target: target_fa,
            reason: format!("noiseless fidelity is only {noiseless:.4}"),
        });
    }
    let mut iterations = 1;

    // Separation of the noiseless IQ points sets the initial bracket scale.
    let synth = Synthesizer::new(params, config, &NoiseModel::default())?;
    let g = crate::demod::demodulate(synth.template(Eigenstate::Ground), config)?;
    let e = crate::demod::demodulate(synth.template(Eigenstate::Excited), config)?;
    let separation = ((g.i - e.i).powi(2) + (g.q - e.q).powi(2)).sqrt();
    if separation <= f64::EPSILON {
        return Err(Error::Unreachable {
            target: target_fa,
            reason: "ground and excited responses coincide".into(),
        });
    }

    let (mut lo, mut lo_fa) = (0.0, noiseless);
    let mut hi = separation * (config.n_samples as f64).sqrt() / 2.0;
    let mut hi_fa = fa(hi)?;
    iterations += 1;
    while hi_fa >= target_fa {
        lo = hi;
        lo_fa = hi_fa;
        hi *= 2.0;
        hi_fa = fa(hi)?;
        iterations += 1;
        if iterations > 60 {
            return Err(Error::Unreachable {
                target: target_fa,
                reason: "fidelity does not drop below target as sigma grows".into(),
            });
        }
    }

    let mut best = if (lo_fa - target_fa).abs() <= (hi_fa - target_fa).abs() {
        (lo, lo_fa)
    } else {
        (hi, hi_fa)
    };
    for _ in 0..50 {
        if (best.1 - target_fa).abs() <= 0.1 * CALIBRATION_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let mid_fa = fa(mid)?;
        iterations += 1;
        if (mid_fa - target_fa).abs() < (best.1 - target_fa).abs() {
            best = (mid, mid_fa);
        }
        if mid_fa >= target_fa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target_fa).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::Unreachable {
            target: target_fa,
            reason: format!("closest fidelity reached was {:.4}", best.1),
        });
    }
    Ok(NoiseCalibration {
        noise: NoiseModel::new(best.0)?,
        target_fa,
        measured_fa: best.1,
        iterations,
        shots_per_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chi_from_device_table() {
        // 85^2 / (5331 - 3842) by hand
        let chi = dispersive_shift(&SystemParams::default());
        assert_abs_diff_eq!(chi, 7225.0 / 1489.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chi, 4.852_249_832, epsilon = 1e-9);
    }

    #[test]
    fn chi_scales_with_g_squared() {
        let p = SystemParams::default();
        let p2 = SystemParams { g: 2.0 * p.g, ..p };
        assert_abs_diff_eq!(dispersive_shift(&p2), 4.0 * dispersive_shift(&p), epsilon = 1e-12);
        let p0 = SystemParams { g: 0.0, ..p };
        assert_eq!(dispersive_shift(&p0), 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SystemParams::new(5.0, 5.0, 85.0, 1.1, 26.0, 5.0).is_err());
        assert!(SystemParams::new(5.3, 3.8, -1.0, 1.1, 26.0, 5.0).is_err());
        assert!(SystemParams::new(5.3, 3.8, 85.0, 0.0, 26.0, 5.0).is_err());
        let strong = SystemParams::new(5.3, 5.2, 85.0, 1.1, 26.0, 5.0).unwrap();
        assert!(!strong.is_dispersive());
        assert!(SystemParams::default().is_dispersive());
    }

    #[test]
    fn readout_window_must_hold_whole_periods() {
        assert!(ReadoutConfig::default().validate().is_ok());
        assert_abs_diff_eq!(ReadoutConfig::default().if_periods(), 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ReadoutConfig::ci().if_periods(), 8.0, epsilon = 1e-12);
        let bad = ReadoutConfig {
            n_samples: 256,
            ..ReadoutConfig::default()
        };
        assert!(bad.validate().is_err());
        let aliased = ReadoutConfig {
            sample_rate: 90e6,
            n_samples: 18,
            ..ReadoutConfig::default()
        };
        assert!(aliased.validate().is_err());
    }

    #[test]
    fn response_symmetric_about_bare_resonance() {
        let p = SystemParams::default();
        let c = ReadoutConfig::default();
        let (ag, tg) = resonator_response(&p, &c, Eigenstate::Ground);
        let (ae, te) = resonator_response(&p, &c, Eigenstate::Excited);
        assert_abs_diff_eq!(ag, ae, epsilon = 1e-15);
        assert_abs_diff_eq!(tg, -te, epsilon = 1e-15);
        // arctan(2 chi / kappa) evaluated independently
        let expected = (2.0 * (7225.0 / 1489.0) / 1.1_f64).atan();
        assert_abs_diff_eq!(te, expected, epsilon = 1e-12);
        assert_abs_diff_eq!((te - tg).abs(), 2.0 * 1.457_928_579_6, epsilon = 1e-9);
    }

    #[test]
    fn response_degenerate_without_coupling() {
        let p = SystemParams {
            g: 1e-12,
            ..SystemParams::default()
        };
        let c = ReadoutConfig::default();
        let g = resonator_response(&p, &c, Eigenstate::Ground);
        let e = resonator_response(&p, &c, Eigenstate::Excited);
        assert_abs_diff_eq!(g.0, e.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.1, e.1, epsilon = 1e-12);
    }

    #[test]
    fn shots_are_deterministic() {
        let s = Synthesizer::new(
            &SystemParams::default(),
            &ReadoutConfig::ci(),
            &NoiseModel::new(0.3).unwrap(),
        )
        .unwrap();
        assert_eq!(s.shot(Eigenstate::Excited, 11), s.shot(Eigenstate::Excited, 11));
        assert_ne!(s.shot(Eigenstate::Excited, 11), s.shot(Eigenstate::Excited, 12));
        assert_eq!(s.labeled_set(20, 5), s.labeled_set(20, 5));
    }

    #[test]
    fn collapse_extremes_and_frequency() {
        assert!((0..1000).all(|s| sample_collapsed_state(0.0, s) == Eigenstate::Ground));
        assert!((0..1000).all(|s| sample_collapsed_state(1.0, s) == Eigenstate::Excited));
        // binomial std at n=1e5 is 0.0016; 0.01 is > 6 std
        let n = 100_000u64;
        let excited = (0..n)
            .filter(|&s| sample_collapsed_state(0.5, seed::derive(3, "c", s)) == Eigenstate::Excited)
            .count();
        assert_abs_diff_eq!(excited as f64 / n as f64, 0.5, epsilon = 0.01);
    }

    #[test]
    fn rabi_population_cases() {
        let r = RabiConfig::default();
        assert_eq!(rabi_population(0.0, &r), 0.0);
        assert_abs_diff_eq!(rabi_population(PI / r.omega_rabi, &r), 1.0, epsilon = 1e-15);
        let damped = RabiConfig {
            envelope_t2: Some(1e300),
            ..r
        };
        for t in r.times() {
            assert_abs_diff_eq!(rabi_population(t, &damped), rabi_population(t, &r), epsilon = 1e-12);
        }
        let short = RabiConfig {
            envelope_t2: Some(30.0),
            ..r
        };
        for k in 0..1000 {
            let p = rabi_population(k as f64 * 0.7, &short);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn default_rabi_has_two_periods() {
        // count upward crossings of p = 1/2 on a fine noiseless grid
        let r = RabiConfig::default();
        let n = 20_000;
        let ps: Vec<f64> = (0..=n)
            .map(|k| rabi_population(r.t_total * k as f64 / n as f64, &r) - 0.5)
            .collect();
        let ups = ps.windows(2).filter(|w| w[0] < 0.0 && w[1] >= 0.0).count();
        assert_eq!(ups, 2);
        assert_abs_diff_eq!(r.omega_rabi, 4.0 * PI / 200.0, epsilon = 1e-15);
        assert_eq!(r.times().len(), 40);
        assert_abs_diff_eq!(r.times()[1], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rabi_set_layout() {
        let s = Synthesizer::new(
            &SystemParams::default(),
            &ReadoutConfig::ci(),
            &NoiseModel::default(),
        )
        .unwrap();
        let rabi = RabiConfig {
            shots_per_step: 3,
            ..RabiConfig::default()
        };
        let set = s.rabi_set(&rabi, 9).unwrap();
        assert_eq!(set.len(), 120);
        assert_eq!(set[41].time_step, Some(5.0));
        assert!(set.iter().all(|r| r.label.is_none()));
        assert_eq!(set, s.rabi_set(&rabi, 9).unwrap());
    }

    #[test]
    fn calibration_rejects_out_of_range_targets() {
        let p = SystemParams::default();
        let c = ReadoutConfig::ci();
        assert!(calibrate_noise_to_fidelity(0.5, &p, &c, 2000, 1).is_err());
        assert!(calibrate_noise_to_fidelity(1.0, &p, &c, 2000, 1).is_err());
        assert!(calibrate_noise_to_fidelity(0.9, &p, &c, 100, 1).is_err());
    }
}
