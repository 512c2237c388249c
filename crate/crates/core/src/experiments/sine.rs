//! Least-squares sine fitting and the Rabi fidelity (coefficient of determination).

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y(t) = amplitude * sin(omega * t + phase) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineParams {
    pub amplitude: f64,
    /// rad/ns
    pub omega: f64,
    pub phase: f64,
    pub offset: f64,
}

impl SineParams {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin() + self.offset
    }

    fn to_vec(self) -> Vector4<f64> {
        Vector4::new(self.amplitude, self.omega, self.phase, self.offset)
    }

    fn from_vec(v: &Vector4<f64>) -> Self {
        Self {
            amplitude: v[0],
            omega: v[1],
            phase: v[2],
            offset: v[3],
        }
    }

    /// Positive amplitude, phase in `(-pi, pi]`.
    fn canonical(mut self) -> Self {
        if self.amplitude < 0.0 {
            self.amplitude = -self.amplitude;
            self.phase += PI;
        }
        self.phase = wrap_phase(self.phase);
        self
    }
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineFit {
    pub params: SineParams,
    pub fitted: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;

fn ssr(p: &SineParams, t: &[f64], y: &[f64]) -> f64 {
    t.iter().zip(y).map(|(&t, &y)| (y - p.eval(t)).powi(2)).sum()
}

/// DFT peak, mean, half range and quadrature-projected phase.
pub fn initial_guess(t: &[f64], y: &[f64]) -> SineParams {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = t[n - 1] - t[0];
    // uniform grid assumed for the frequency guess
    let dt = span / (n - 1) as f64;
    let mut best = (1usize, -1.0);
    for k in 1..=n / 2 {
        let w = 2.0 * PI * k as f64 / n as f64;
        let (re, im) = y.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, &v)| {
            let a = w * j as f64;
            (re + (v - mean) * a.cos(), im - (v - mean) * a.sin())
        });
        let power = re * re + im * im;
        if power > best.1 {
            best = (k, power);
        }
    }
    let omega = 2.0 * PI * best.0 as f64 / (n as f64 * dt);
    let (mut s, mut c) = (0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        s += (yi - mean) * (omega * ti).sin();
        c += (yi - mean) * (omega * ti).cos();
    }
    SineParams {
        amplitude: 0.5 * (hi - lo),
        omega,
        phase: c.atan2(s),
        offset: mean,
    }
}

/// Levenberg-Marquardt refinement from `start`, at most `max_iter` accepted or
/// rejected steps.
pub fn refine(start: SineParams, t: &[f64], y: &[f64], max_iter: usize) -> SineFit {
    let mut p = start;
    let mut cost = ssr(&p, t, y);
    let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut lambda = 1e-3;
    let mut converged = cost <= 1e-28 * scale;
    let mut iterations = 0;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let arg = p.omega * ti + p.phase;
            let (s, c) = arg.sin_cos();
            let j = Vector4::new(s, p.amplitude * ti * c, p.amplitude * c, 1.0);
            let r = yi - p.eval(ti);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = SineParams::from_vec(&(p.to_vec() + delta));
            let trial_cost = ssr(&trial, t, y);
            if trial_cost.is_finite() && trial_cost <= cost {
                let change = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                if change < RELATIVE_TOLERANCE || cost <= 1e-28 * scale {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: a (possibly degenerate) minimum
            converged = true;
        }
    }
    let params = p.canonical();
    SineFit {
        fitted: t.iter().map(|&ti| params.eval(ti)).collect(),
        params,
        iterations,
        converged,
    }
}

/// Fits `A sin(omega t + phase) + c` to a sampled curve.
pub fn fit_sine(t: &[f64], y: &[f64]) -> Result<SineFit> {
    if t.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: t.len(),
            actual: y.len(),
        });
    }
    if y.len() < 8 {
        return Err(Error::invalid("curve", "need at least 8 points to fit a sine"));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("curve", "non-finite value"));
    }
    Ok(refine(initial_guess(t, y), t, y, MAX_ITERATIONS))
}

/// `1 - sum (y - f)^2 / sum (y - mean(y))^2`.
pub fn rabi_fidelity(y: &[f64], f: &[f64]) -> Result<f64> {
    if y.len() != f.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: f.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::invalid("curve", "need at least 2 points"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 || y.iter().all(|&v| v == y[0]) {
        return Err(Error::ConstantCurve);
    }
    let ss_res: f64 = y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
