//! Evaluation protocol: assignment fidelity, Rabi tomography at several
//! averaging depths, sine fits and variance reports.

mod sine;

pub use sine::{fit_sine, initial_guess, rabi_fidelity, refine, SineFit, SineParams};

use std::collections::BTreeMap;

use log::info;
use serde::{Deserialize, Serialize};

use crate::discriminators::{
    Backend, FnnModel, PopulationEstimate, ShotEstimator, TrmnnModule,
};
use crate::error::{Error, Result};
use crate::neural::{NetworkConfig, TrainConfig, TrainReport};
use crate::raw_readout::RawReadout;
use crate::seed;
use crate::signal::{
    Eigenstate, NoiseModel, RabiConfig, ReadoutConfig, ShotRecord, Synthesizer, SystemParams,
    Waveform,
};

/// Counts of (prepared, assigned) outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_g_given_g: u64,
    pub n_e_given_g: u64,
    pub n_g_given_e: u64,
    pub n_e_given_e: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, prepared: Eigenstate, assigned: Eigenstate) {
        use Eigenstate::*;
        match (prepared, assigned) {
            (Ground, Ground) => self.n_g_given_g += 1,
            (Ground, Excited) => self.n_e_given_g += 1,
            (Excited, Ground) => self.n_g_given_e += 1,
            (Excited, Excited) => self.n_e_given_e += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Eigenstate, Eigenstate)>) -> Self {
        let mut c = Self::default();
        for (p, a) in pairs {
            c.record(p, a);
        }
        c
    }

    pub fn total_ground(&self) -> u64 {
        self.n_g_given_g + self.n_e_given_g
    }

    pub fn total_excited(&self) -> u64 {
        self.n_g_given_e + self.n_e_given_e
    }

    /// Both prepared and assigned labels exchanged.
    pub fn relabeled(&self) -> Self {
        Self {
            n_g_given_g: self.n_e_given_e,
            n_e_given_g: self.n_g_given_e,
            n_g_given_e: self.n_e_given_g,
            n_e_given_e: self.n_g_given_g,
        }
    }

    pub fn assignment_fidelity(&self) -> Result<f64> {
        assignment_fidelity(self)
    }
}

/// `1 - [P(g|e) + P(e|g)] / 2`.
pub fn assignment_fidelity(c: &ConfusionCounts) -> Result<f64> {
    let (tg, te) = (c.total_ground(), c.total_excited());
    if tg == 0 || te == 0 {
        return Err(Error::Empty("prepared-state shots"));
    }
    let p_g_e = c.n_g_given_e as f64 / te as f64;
    let p_e_g = c.n_e_given_g as f64 / tg as f64;
    Ok(1.0 - 0.5 * (p_g_e + p_e_g))
}

/// Trained back-ends sharing one training set.
#[derive(Debug, Clone, Default)]
pub struct Backends {
    pub raw: Option<RawReadout>,
    pub fnn: Option<FnnModel>,
    pub trmnn: Option<TrmnnModule>,
}

impl Backends {
    pub fn get(&self, b: Backend) -> Option<&dyn ShotEstimator> {
        match b {
            Backend::Raw => self.raw.as_ref().map(|e| e as &dyn ShotEstimator),
            Backend::Fnn => self.fnn.as_ref().map(|e| e as &dyn ShotEstimator),
            Backend::Trmnn => self.trmnn.as_ref().map(|e| e as &dyn ShotEstimator),
        }
    }

    /// Available back-ends in canonical order.
    pub fn available(&self) -> Vec<Backend> {
        Backend::ALL.into_iter().filter(|b| self.get(*b).is_some()).collect()
    }
}

/// Everything needed to synthesize, train and evaluate one SNR setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub params: SystemParams,
    pub readout: ReadoutConfig,
    pub noise: NoiseModel,
    pub rabi: RabiConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub n_train_per_state: usize,
    pub n_test_per_state: usize,
    pub qubit_id: String,
}

/// Fits the requested back-ends on labelled records. Neural init and shuffle
/// seeds are derived from `seed`, independently per back-end.
pub fn train_backends(
    records: &[ShotRecord],
    readout: &ReadoutConfig,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    qubit_id: &str,
    which: &[Backend],
    seed: u64,
) -> Result<(Backends, BTreeMap<Backend, TrainReport>)> {
    let mut out = Backends::default();
    let mut reports = BTreeMap::new();
    for &b in which {
        let net = NetworkConfig {
            init_seed: seed::derive(seed, b.name(), 0),
            ..net_cfg.clone()
        };
        let tc = TrainConfig {
            shuffle_seed: seed::derive(seed, b.name(), 1),
            ..*train_cfg
        };
        match b {
            Backend::Raw => {
                let shots: Vec<Waveform> = records.iter().map(|r| r.waveform.clone()).collect();
                let labels = labels_of(records)?;
                out.raw = Some(RawReadout::fit(&shots, &labels, readout)?);
            }
            Backend::Fnn => {
                let (m, r) = FnnModel::train(records, &net, &tc)?;
                info!("fnn: {} epochs, best {}", r.epochs, r.best_epoch);
                out.fnn = Some(m);
                reports.insert(b, r);
            }
            Backend::Trmnn => {
                let (m, r) = TrmnnModule::train(qubit_id, records, &net, &tc)?;
                info!("trmnn: {} epochs, best {}", r.epochs, r.best_epoch);
                out.trmnn = Some(m);
                reports.insert(b, r);
            }
        }
    }
    Ok((out, reports))
}

fn labels_of(records: &[ShotRecord]) -> Result<Vec<Eigenstate>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.label
                .ok_or_else(|| Error::at_shot(i, Error::Data("record has no label".into())))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub assignment_fidelity: f64,
    pub confusion: ConfusionCounts,
}

pub type AssignmentTable = BTreeMap<Backend, AssignmentResult>;

/// Assignment fidelity of every available back-end on labelled test shots.
pub fn assignment_table(backends: &Backends, test: &[ShotRecord]) -> Result<AssignmentTable> {
    let labels = labels_of(test)?;
    let shots: Vec<Waveform> = test.iter().map(|r| r.waveform.clone()).collect();
    let mut table = BTreeMap::new();
    for b in backends.available() {
        let est = backends.get(b).expect("available");
        let assigned = est.classify_batch(&shots)?;
        let confusion = ConfusionCounts::from_pairs(labels.iter().copied().zip(assigned));
        table.insert(
            b,
            AssignmentResult {
                assignment_fidelity: confusion.assignment_fidelity()?,
                confusion,
            },
        );
    }
    Ok(table)
}

/// Synthesizes train and held-out test sets, trains `which`, scores them.
pub fn run_assignment_experiment(
    setup: &ExperimentSetup,
    which: &[Backend],
    seed: u64,
) -> Result<(AssignmentTable, Backends)> {
    let synth = Synthesizer::new(&setup.params, &setup.readout, &setup.noise)?;
    let train = synth.labeled_set(setup.n_train_per_state, seed::derive(seed, "train", 0));
    let test = synth.labeled_set(setup.n_test_per_state, seed::derive(seed, "test", 0));
    let (backends, _) = train_backends(
        &train,
        &setup.readout,
        &setup.network,
        &setup.train,
        &setup.qubit_id,
        which,
        seed::derive(seed, "backends", 0),
    )?;
    Ok((assignment_table(&backends, &test)?, backends))
}

/// Population versus drive time for one back-end at one averaging depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiCurve {
    pub backend: Backend,
    pub m: usize,
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl RabiCurve {
    /// Time average of the per-step variances.
    pub fn mean_variance(&self) -> f64 {
        self.variances.iter().sum::<f64>() / self.variances.len() as f64
    }
}

/// The averaging depths of the reference measurements.
pub const DEFAULT_M_VALUES: [usize; 4] = [10, 50, 100, 600];

/// Per-trace estimates reshaped to `[trace][step]`.
fn trace_estimates(
    est: &dyn ShotEstimator,
    records: &[ShotRecord],
    n_steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let shots: Vec<Waveform> = records.iter().map(|r| r.waveform.clone()).collect();
    let values = est.estimate_batch(&shots)?;
    Ok(values.chunks(n_steps).map(<[f64]>::to_vec).collect())
}

fn check_rabi_records(rabi: &RabiConfig, records: &[ShotRecord]) -> Result<(Vec<f64>, usize)> {
    rabi.validate()?;
    let times = rabi.times();
    if records.is_empty() || records.len() % rabi.n_steps != 0 {
        return Err(Error::Data(format!(
            "{} Rabi records do not form whole traces of {} steps",
            records.len(),
            rabi.n_steps
        )));
    }
    for (i, r) in records.iter().enumerate() {
        let expected = times[i % rabi.n_steps];
        match r.time_step {
            Some(t) if (t - expected).abs() <= 1e-9 * expected.abs().max(1.0) => {}
            _ => {
                return Err(Error::at_shot(
                    i,
                    Error::Data(format!("expected time step {expected} ns")),
                ))
            }
        }
    }
    Ok((times, records.len() / rabi.n_steps))
}

/// For every back-end and every `M`, per-step mean and sample variance of the
/// per-trace estimates over the first `M` traces.
pub fn run_rabi_experiment(
    rabi: &RabiConfig,
    records: &[ShotRecord],
    backends: &Backends,
    m_values: &[usize],
) -> Result<Vec<RabiCurve>> {
    let (times, n_traces) = check_rabi_records(rabi, records)?;
    if let Some(&m) = m_values.iter().find(|&&m| m > n_traces || m == 0) {
        return Err(Error::NotEnoughTraces {
            requested: m,
            available: n_traces,
        });
    }
    let mut curves = Vec::new();
    for b in backends.available() {
        let per_trace = trace_estimates(backends.get(b).expect("available"), records, rabi.n_steps)?;
        for &m in m_values {
            let mut means = Vec::with_capacity(rabi.n_steps);
            let mut variances = Vec::with_capacity(rabi.n_steps);
            for k in 0..rabi.n_steps {
                let column: Vec<f64> = per_trace[..m].iter().map(|tr| tr[k]).collect();
                let est = PopulationEstimate::from_values(&column)?;
                means.push(est.mean);
                variances.push(est.variance);
            }
            curves.push(RabiCurve {
                backend: b,
                m,
                times: times.clone(),
                means,
                variances,
            });
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFidelityEntry {
    pub backend: Backend,
    pub m: usize,
    pub rabi_fidelity: f64,
    pub fit: SineParams,
    pub converged: bool,
}

/// Sine fit and Rabi fidelity of every curve.
pub fn rabi_fidelity_table(curves: &[RabiCurve]) -> Result<Vec<RabiFidelityEntry>> {
    curves
        .iter()
        .map(|c| {
            let fit = fit_sine(&c.times, &c.means)?;
            Ok(RabiFidelityEntry {
                backend: c.backend,
                m: c.m,
                rabi_fidelity: rabi_fidelity(&c.means, &fit.fitted)?,
                fit: fit.params,
                converged: fit.converged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEntry {
    pub backend: Backend,
    pub m: usize,
    pub mean_variance: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// Divisor applied to every `mean_variance`.
    pub normalization: f64,
    pub entries: Vec<VarianceEntry>,
}

impl VarianceReport {
    pub fn get(&self, backend: Backend, m: usize) -> Option<&VarianceEntry> {
        self.entries.iter().find(|e| e.backend == backend && e.m == m)
    }
}

/// Temporally averaged variances. Without an explicit `reference`, values are
/// normalized to the raw curve with the largest `M`.
pub fn variance_report(curves: &[RabiCurve], reference: Option<f64>) -> Result<VarianceReport> {
    let first = curves.first().ok_or(Error::Empty("curves"))?;
    if curves.iter().any(|c| c.times != first.times) {
        return Err(Error::GridMismatch);
    }
    let normalization = match reference {
        Some(r) => r,
        None => curves
            .iter()
            .filter(|c| c.backend == Backend::Raw)
            .max_by_key(|c| c.m)
            .map(RabiCurve::mean_variance)
            .ok_or_else(|| Error::invalid("reference", "no raw curve to normalize against"))?,
    };
    if !(normalization > 0.0 && normalization.is_finite()) {
        return Err(Error::invalid("reference", format!("normalization {normalization} is not positive")));
    }
    Ok(VarianceReport {
        normalization,
        entries: curves
            .iter()
            .map(|c| VarianceEntry {
                backend: c.backend,
                m: c.m,
                mean_variance: c.mean_variance(),
                normalized: c.mean_variance() / normalization,
            })
            .collect(),
    })
}

/// Mean per-shot estimate at each population in `ps`, `m` shots per point.
pub fn superposition_sweep(
    est: &dyn ShotEstimator,
    synth: &Synthesizer,
    ps: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<PopulationEstimate>> {
    ps.iter()
        .enumerate()
        .map(|(k, &p)| {
            let shots = synth.population_set(p, m, seed::derive(seed, "sweep", k as u64));
            PopulationEstimate::from_values(&est.estimate_batch(&shots)?)
        })
        .collect()
}
