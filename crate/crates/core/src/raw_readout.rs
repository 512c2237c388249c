//! Raw IQ-plane readout: a label-supervised linear discriminant between the
//! ground and excited clouds.

use serde::{Deserialize, Serialize};

use crate::demod::{Demodulator, IqPoint};
use crate::discriminators::{PopulationEstimate, ShotEstimator};
use crate::error::{Error, Result};
use crate::experiments::ConfusionCounts;
use crate::par;
use crate::signal::{Eigenstate, ReadoutConfig, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discriminant {
    pub mu_g: IqPoint,
    pub mu_e: IqPoint,
    /// Unit vector from `mu_g` towards `mu_e`.
    pub axis: IqPoint,
    /// Projection of the centroid midpoint onto `axis`.
    pub threshold: f64,
    /// Standard deviation of each cloud along `axis`.
    pub sigma_g: f64,
    pub sigma_e: f64,
}

fn centroid(pts: &[IqPoint]) -> IqPoint {
    let n = pts.len() as f64;
    let (si, sq) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.i, b + p.q));
    IqPoint::new(si / n, sq / n)
}

fn projected_std(pts: &[IqPoint], axis: &IqPoint) -> f64 {
    let proj: Vec<f64> = pts.iter().map(|p| p.dot(axis)).collect();
    let mean = proj.iter().sum::<f64>() / proj.len() as f64;
    let ss: f64 = proj.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (proj.len() - 1) as f64).sqrt()
}

/// Fits the discriminant to labelled calibration clouds.
pub fn calibrate(ground_pts: &[IqPoint], excited_pts: &[IqPoint]) -> Result<Discriminant> {
    if ground_pts.len() < 2 || excited_pts.len() < 2 {
        return Err(Error::invalid(
            "calibration points",
            "need at least 2 points per state",
        ));
    }
    let mu_g = centroid(ground_pts);
    let mu_e = centroid(excited_pts);
    let diff = mu_e.sub(&mu_g);
    let len = diff.norm();
    let scale = mu_g.norm().max(mu_e.norm());
    if !(len > 1e-12 * scale) || len == 0.0 {
        return Err(Error::CoincidentCentroids);
    }
    let axis = IqPoint::new(diff.i / len, diff.q / len);
    let threshold = 0.5 * (mu_g.dot(&axis) + mu_e.dot(&axis));
    Ok(Discriminant {
        mu_g,
        mu_e,
        axis,
        threshold,
        sigma_g: projected_std(ground_pts, &axis),
        sigma_e: projected_std(excited_pts, &axis),
    })
}

/// [`calibrate`] from one list of points and a parallel list of labels.
pub fn calibrate_labeled(pts: &[IqPoint], labels: &[Eigenstate]) -> Result<Discriminant> {
    if pts.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: pts.len(),
            actual: labels.len(),
        });
    }
    let (g, e): (Vec<_>, Vec<_>) = pts.iter().zip(labels).partition(|(_, l)| **l == Eigenstate::Ground);
    let g: Vec<IqPoint> = g.into_iter().map(|(p, _)| *p).collect();
    let e: Vec<IqPoint> = e.into_iter().map(|(p, _)| *p).collect();
    calibrate(&g, &e)
}

impl Discriminant {
    /// Projection onto the axis; strictly above the threshold is excited,
    /// anything else (including a tie) is ground.
    pub fn classify(&self, p: &IqPoint) -> Eigenstate {
        if p.dot(&self.axis) > self.threshold {
            Eigenstate::Excited
        } else {
            Eigenstate::Ground
        }
    }

    /// Separation of the projected centroids over the pooled projected spread.
    pub fn separation_snr(&self) -> f64 {
        let d = self.mu_e.sub(&self.mu_g).norm();
        d / (0.5 * (self.sigma_g.powi(2) + self.sigma_e.powi(2))).sqrt()
    }
}

pub fn classify(d: &Discriminant, p: &IqPoint) -> Eigenstate {
    d.classify(p)
}

/// Excited fraction over `pts`, with the sample variance of the 0/1 assignments.
pub fn population(d: &Discriminant, pts: &[IqPoint]) -> Result<PopulationEstimate> {
    let bits: Vec<f64> = pts
        .iter()
        .map(|p| d.classify(p).index() as f64)
        .collect();
    PopulationEstimate::from_values(&bits)
}

/// Confusion counts of `d` on labelled points.
pub fn evaluate_labeled(
    d: &Discriminant,
    pts: &[IqPoint],
    labels: &[Eigenstate],
) -> Result<ConfusionCounts> {
    if pts.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: pts.len(),
            actual: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, &l) in pts.iter().zip(labels) {
        c.record(l, d.classify(p));
    }
    Ok(c)
}

/// Raw readout as a per-shot estimator: demodulate, then assign a 0/1 bit.
#[derive(Debug, Clone)]
pub struct RawReadout {
    pub discriminant: Discriminant,
    demodulator: Demodulator,
}

impl RawReadout {
    pub fn new(discriminant: Discriminant, config: &ReadoutConfig) -> Self {
        Self {
            discriminant,
            demodulator: Demodulator::for_config(config),
        }
    }

    /// Demodulates labelled calibration waveforms and fits the discriminant.
    pub fn fit(shots: &[Waveform], labels: &[Eigenstate], config: &ReadoutConfig) -> Result<Self> {
        let demodulator = Demodulator::for_config(config);
        let pts = demodulator.demodulate_batch(shots)?;
        Ok(Self {
            discriminant: calibrate_labeled(&pts, labels)?,
            demodulator,
        })
    }

    pub fn demodulator(&self) -> &Demodulator {
        &self.demodulator
    }

    pub fn classify_shots(&self, shots: &[Waveform]) -> Result<Vec<Eigenstate>> {
        let pts = self.demodulator.demodulate_batch(shots)?;
        Ok(par::map_slice(&pts, |p| self.discriminant.classify(p)))
    }
}

impl ShotEstimator for RawReadout {
    fn estimate(&self, w: &Waveform) -> Result<f64> {
        let p = self.demodulator.demodulate(w)?;
        Ok(self.discriminant.classify(&p).index() as f64)
    }

    fn classify(&self, w: &Waveform) -> Result<Eigenstate> {
        let p = self.demodulator.demodulate(w)?;
        Ok(self.discriminant.classify(&p))
    }
}
