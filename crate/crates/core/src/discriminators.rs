//! Neural readout back-ends built on [`crate::neural`].
//!
//! [`FnnModel`] is a softmax classifier. [`TrmnnModule`] has the same topology
//! and is trained on the same softmax cross-entropy, but at inference it exposes
//! the raw output scores as a [`SimilarityPair`] and converts them to a graded
//! excited population with [`probability_estimate`]. One module is kept per
//! qubit in a [`ModuleRegistry`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{
    init_network, read_model, softmax, train, write_model, ModelFile, Network,
    NetworkConfig, Normalization, TrainConfig, TrainReport, TrainingSet,
};
use crate::par;
use crate::signal::{Eigenstate, ShotRecord, Waveform};

/// Mean and spread of per-shot excited-population estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub mean: f64,
    /// Unbiased sample variance; zero for a single shot.
    pub variance: f64,
    pub m: usize,
}

impl PopulationEstimate {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("population shots"));
        }
        let m = values.len();
        let mean = values.iter().sum::<f64>() / m as f64;
        let variance = if m > 1 && values.iter().any(|&v| v != values[0]) {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            mean: mean.clamp(0.0, 1.0),
            variance,
            m,
        })
    }
}

/// Raw output-layer scores: resemblance to the ground and excited references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub s_g: f64,
    pub s_e: f64,
}

/// Excited probability from a score pair: the ratio of the non-negative parts,
/// `max(s_e, 0) / (max(s_g, 0) + max(s_e, 0))`, or 0.5 when both are non-positive.
pub fn probability_estimate(pair: SimilarityPair) -> f64 {
    let g = pair.s_g.max(0.0);
    let e = pair.s_e.max(0.0);
    if g + e == 0.0 {
        0.5
    } else {
        e / (g + e)
    }
}

/// Anything that maps a single waveform to an excited-population value.
pub trait ShotEstimator: Sync {
    /// Per-shot excited population in `[0, 1]`.
    fn estimate(&self, w: &Waveform) -> Result<f64>;

    /// Hard assignment of one shot.
    fn classify(&self, w: &Waveform) -> Result<Eigenstate> {
        Ok(if self.estimate(w)? > 0.5 {
            Eigenstate::Excited
        } else {
            Eigenstate::Ground
        })
    }

    fn estimate_batch(&self, shots: &[Waveform]) -> Result<Vec<f64>> {
        par::try_map_slice(shots, |i, w| self.estimate(w).map_err(|e| Error::at_shot(i, e)))
    }

    fn classify_batch(&self, shots: &[Waveform]) -> Result<Vec<Eigenstate>> {
        par::try_map_slice(shots, |i, w| self.classify(w).map_err(|e| Error::at_shot(i, e)))
    }
}

/// Mean and sample variance of per-shot estimates over a set of shots.
pub fn infer_batch<E: ShotEstimator + ?Sized>(
    estimator: &E,
    shots: &[Waveform],
) -> Result<PopulationEstimate> {
    if shots.is_empty() {
        return Err(Error::Empty("shots"));
    }
    PopulationEstimate::from_values(&estimator.estimate_batch(shots)?)
}

/// Which readout back-end to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Raw,
    Fnn,
    Trmnn,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Raw, Backend::Fnn, Backend::Trmnn];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Raw => "raw",
            Backend::Fnn => "fnn",
            Backend::Trmnn => "trmnn",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Backend::Raw),
            "fnn" => Ok(Backend::Fnn),
            "trmnn" => Ok(Backend::Trmnn),
            other => Err(Error::invalid("backend", format!("unknown backend `{other}`"))),
        }
    }
}

/// Labelled waveforms turned into a standardized training set.
pub fn prepare_training(records: &[ShotRecord]) -> Result<(Normalization, TrainingSet)> {
    let mut shots = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let label = r.label.ok_or_else(|| {
            Error::at_shot(i, Error::Data("training record has no ground/excited label".into()))
        })?;
        shots.push(&r.waveform);
        labels.push(label.index());
    }
    let n_e = labels.iter().filter(|&&l| l == 1).count();
    let n_g = labels.len() - n_e;
    if n_g == 0 || n_e == 0 {
        return Err(Error::SingleClass);
    }
    let frac = n_e as f64 / labels.len() as f64;
    if !(0.4..=0.6).contains(&frac) {
        warn!("unbalanced training set: {n_g} ground vs {n_e} excited shots");
    }
    let norm = Normalization::fit(shots.iter().copied())?;
    let owned: Vec<Waveform> = shots.into_iter().cloned().collect();
    let inputs = norm.feature_matrix(&owned)?;
    Ok((norm, TrainingSet::new(inputs, labels)?))
}

fn fit_network(
    records: &[ShotRecord],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<(Network, Normalization, TrainReport)> {
    let (norm, set) = prepare_training(records)?;
    if net_cfg.output_dim != 2 {
        return Err(Error::invalid("output_dim", "readout networks have two outputs"));
    }
    if set.inputs.ncols() != net_cfg.input_dim {
        return Err(Error::LengthMismatch {
            expected: net_cfg.input_dim,
            actual: set.inputs.ncols(),
        });
    }
    let (net, report) = train(init_network(net_cfg)?, &set, train_cfg)?;
    Ok((net, norm, report))
}

fn check_len(norm_net: &Network, w: &Waveform) -> Result<()> {
    if 2 * w.len() != norm_net.input_dim() || w.i_samples.len() != w.q_samples.len() {
        return Err(Error::LengthMismatch {
            expected: norm_net.input_dim(),
            actual: w.i_samples.len() + w.q_samples.len(),
        });
    }
    Ok(())
}

/// Softmax discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub network: Network,
    pub normalization: Normalization,
}

impl FnnModel {
    pub fn train(
        records: &[ShotRecord],
        net_cfg: &NetworkConfig,
        train_cfg: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        let (network, normalization, report) = fit_network(records, net_cfg, train_cfg)?;
        Ok((
            Self {
                network,
                normalization,
            },
            report,
        ))
    }

    /// Softmax probability of the excited class.
    pub fn infer_shot(&self, w: &Waveform) -> Result<f64> {
        check_len(&self.network, w)?;
        let logits = self.network.forward(&self.normalization.features(w))?;
        Ok(softmax(&logits)[1])
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            network: self.network.clone(),
            normalization: self.normalization,
        }
    }

    pub fn from_model_file(m: ModelFile) -> Self {
        Self {
            network: m.network,
            normalization: m.normalization,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_model(path, &self.to_model_file())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_model_file(read_model(path)?))
    }
}

impl ShotEstimator for FnnModel {
    fn estimate(&self, w: &Waveform) -> Result<f64> {
        self.infer_shot(w)
    }
}

pub fn train_fnn(
    records: &[ShotRecord],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<(FnnModel, TrainReport)> {
    FnnModel::train(records, net_cfg, train_cfg)
}

pub fn fnn_infer_shot(model: &FnnModel, w: &Waveform) -> Result<f64> {
    model.infer_shot(w)
}

/// Per-qubit module with a score-ratio head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrmnnModule {
    pub qubit_id: String,
    pub network: Network,
    pub normalization: Normalization,
}

impl TrmnnModule {
    pub fn train(
        qubit_id: impl Into<String>,
        records: &[ShotRecord],
        net_cfg: &NetworkConfig,
        train_cfg: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        let (network, normalization, report) = fit_network(records, net_cfg, train_cfg)?;
        Ok((
            Self {
                qubit_id: qubit_id.into(),
                network,
                normalization,
            },
            report,
        ))
    }

    /// Raw output scores; no softmax.
    pub fn similarity(&self, w: &Waveform) -> Result<SimilarityPair> {
        check_len(&self.network, w)?;
        let s = self.network.forward(&self.normalization.features(w))?;
        Ok(SimilarityPair { s_g: s[0], s_e: s[1] })
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            network: self.network.clone(),
            normalization: self.normalization,
        }
    }

    pub fn from_model_file(qubit_id: impl Into<String>, m: ModelFile) -> Self {
        Self {
            qubit_id: qubit_id.into(),
            network: m.network,
            normalization: m.normalization,
        }
    }
}

impl ShotEstimator for TrmnnModule {
    fn estimate(&self, w: &Waveform) -> Result<f64> {
        Ok(probability_estimate(self.similarity(w)?))
    }

    /// Excited when the excited score beats the ground score.
    fn classify(&self, w: &Waveform) -> Result<Eigenstate> {
        let s = self.similarity(w)?;
        Ok(if s.s_e > s.s_g {
            Eigenstate::Excited
        } else {
            Eigenstate::Ground
        })
    }
}

pub fn trmnn_similarity(module: &TrmnnModule, w: &Waveform) -> Result<SimilarityPair> {
    module.similarity(w)
}

/// One manifest entry per registered qubit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model_path: PathBuf,
    /// Hex SHA-256 of the training dataset file.
    pub dataset_hash: String,
}

/// `registry.json`: qubit id to model file and training-set hash.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegistryManifest {
    pub modules: BTreeMap<String, ManifestEntry>,
}

/// Per-qubit TRMNN modules. Reads of distinct modules may run concurrently;
/// registration needs `&mut`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModuleRegistry {
    modules: BTreeMap<String, TrmnnModule>,
    hashes: BTreeMap<String, String>,
}

impl ModuleRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a module, replacing (with a warning) any module for the same qubit.
    pub fn register(&mut self, module: TrmnnModule) -> Option<TrmnnModule> {
        let old = self.modules.insert(module.qubit_id.clone(), module);
        if let Some(old) = &old {
            warn!("replacing TRMNN module for qubit `{}`", old.qubit_id);
        }
        old
    }

    pub fn set_dataset_hash(&mut self, qubit_id: &str, hash: impl Into<String>) {
        self.hashes.insert(qubit_id.to_string(), hash.into());
    }

    pub fn get(&self, qubit_id: &str) -> Option<&TrmnnModule> {
        self.modules.get(qubit_id)
    }

    pub fn qubit_ids(&self) -> impl Iterator<Item = &str> {
        self.modules.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    /// Writes `<qubit_id>.qrtm` per module and `registry.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<RegistryManifest> {
        let mut manifest = RegistryManifest::default();
        for (id, module) in &self.modules {
            let file = PathBuf::from(format!("trmnn_{id}.qrtm"));
            write_model(&dir.join(&file), &module.to_model_file())?;
            manifest.modules.insert(
                id.clone(),
                ManifestEntry {
                    model_path: file,
                    dataset_hash: self.hashes.get(id).cloned().unwrap_or_default(),
                },
            );
        }
        let path = dir.join("registry.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// Loads `registry.json` and every module it lists; relative model paths
    /// resolve against `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("registry.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: RegistryManifest = serde_json::from_str(&text)?;
        let mut reg = Self::new();
        for (id, entry) in manifest.modules {
            let model = read_model(&dir.join(&entry.model_path))?;
            reg.register(TrmnnModule::from_model_file(id.clone(), model));
            reg.set_dataset_hash(&id, entry.dataset_hash);
        }
        Ok(reg)
    }
}

/// Trains a module for `qubit_id` and registers it.
pub fn train_trmnn(
    registry: &mut ModuleRegistry,
    qubit_id: &str,
    records: &[ShotRecord],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainReport> {
    let (module, report) = TrmnnModule::train(qubit_id, records, net_cfg, train_cfg)?;
    registry.register(module);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn probability_estimate_cases() {
        let p = |s_g, s_e| probability_estimate(SimilarityPair { s_g, s_e });
        assert_eq!(p(1.0, 1.0), 0.5);
        assert_eq!(p(0.0, 3.0), 1.0);
        assert_eq!(p(3.0, 1.0), 0.25);
        assert_eq!(p(-1.0, -2.0), 0.5);
        assert_eq!(p(-1.0, 2.0), 1.0);
        assert_eq!(p(0.0, 0.0), 0.5);
    }

    #[test]
    fn population_stats() {
        let e = PopulationEstimate::from_values(&[0.2; 7]).unwrap();
        assert_abs_diff_eq!(e.mean, 0.2, epsilon = 1e-15);
        assert_eq!(e.variance, 0.0);
        assert_eq!(e.m, 7);
        let one = PopulationEstimate::from_values(&[0.9]).unwrap();
        assert_eq!((one.mean, one.variance), (0.9, 0.0));
        let e = PopulationEstimate::from_values(&[0.0, 1.0, 0.5, 0.25]).unwrap();
        assert!(e.mean >= 0.0 && e.mean <= 1.0);
        assert!(PopulationEstimate::from_values(&[]).is_err());
    }

    #[test]
    fn backend_names() {
        for b in Backend::ALL {
            assert_eq!(b.name().parse::<Backend>().unwrap(), b);
        }
        assert!("softmax".parse::<Backend>().is_err());
    }
}
