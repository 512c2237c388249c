//! Run configuration: a preset (`ci` or `paper`) overlaid with TOML overrides.

use std::path::{Path, PathBuf};

use qrt_core::neural::{NetworkConfig, TrainConfig};
use qrt_core::signal::{RabiConfig, ReadoutConfig, SystemParams};
use qrt_core::{seed, Backend, NoiseModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Ci,
    Paper,
}

/// Either a fixed noise level or a raw-readout fidelity to calibrate towards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    Sigma(f64),
    TargetFidelity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sizes {
    pub n_train_per_state: usize,
    pub n_test_per_state: usize,
    pub calibration_shots_per_state: usize,
}

/// Every seed used by a run. Unset entries derive from `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Seeds {
    pub base: u64,
    pub calibration: u64,
    pub train_data: u64,
    pub test_data: u64,
    pub rabi_data: u64,
    pub backends: u64,
}

impl Seeds {
    pub fn derived(base: u64) -> Self {
        Self {
            base,
            calibration: seed::derive(base, "calibration", 0),
            train_data: seed::derive(base, "train", 0),
            test_data: seed::derive(base, "test", 0),
            rabi_data: seed::derive(base, "rabi", 0),
            backends: seed::derive(base, "backends", 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    pub qubit_id: String,
    pub backends: Vec<Backend>,
    pub system: SystemParams,
    pub readout: ReadoutConfig,
    pub noise: NoiseSpec,
    pub rabi: RabiConfig,
    pub m_values: Vec<usize>,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub sizes: Sizes,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (readout, network, sizes) = match preset {
            Preset::Ci => (
                ReadoutConfig::ci(),
                NetworkConfig::ci(),
                Sizes {
                    n_train_per_state: 500,
                    n_test_per_state: 500,
                    calibration_shots_per_state: 2000,
                },
            ),
            Preset::Paper => (
                ReadoutConfig::default(),
                NetworkConfig::default(),
                Sizes {
                    n_train_per_state: 4000,
                    n_test_per_state: 1000,
                    calibration_shots_per_state: 2000,
                },
            ),
        };
        Self {
            preset,
            seeds: Seeds::derived(0),
            output_dir: PathBuf::from("out"),
            qubit_id: "q0".into(),
            backends: Backend::ALL.to_vec(),
            system: SystemParams::default(),
            readout,
            noise: NoiseSpec::TargetFidelity(0.801),
            rabi: RabiConfig::default(),
            m_values: qrt_core::experiments::DEFAULT_M_VALUES.to_vec(),
            network,
            train: TrainConfig::default(),
            sizes,
        }
    }

    /// Reads a TOML file on top of its preset.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let file: FileConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        let mut cfg = Self::preset(file.preset.unwrap_or_default());
        file.apply(&mut cfg);
        cfg.validate().map_err(|(section, key, reason)| {
            CliError::Config(diagnostic(text, origin, section, key, &reason))
        })?;
        Ok(cfg)
    }

    /// Replaces every seed with derivations from `base`.
    pub fn reseed(&mut self, base: u64) {
        self.seeds = Seeds::derived(base);
    }

    /// `(section, key, reason)` of the first violated constraint.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        let core = |section: &'static str, e: qrt_core::Error| match e {
            qrt_core::Error::InvalidParameter { name, reason } => (section, name, reason),
            other => (section, "", other.to_string()),
        };
        self.system.validate().map_err(|e| core("system", e))?;
        self.readout.validate().map_err(|e| core("readout", e))?;
        self.rabi.validate().map_err(|e| core("rabi", e))?;
        self.network.validate().map_err(|e| core("network", e))?;
        self.train.validate().map_err(|e| core("train", e))?;
        match self.noise {
            NoiseSpec::Sigma(s) => {
                NoiseModel::new(s).map_err(|e| core("noise", e))?;
            }
            NoiseSpec::TargetFidelity(f) if !(f > 0.5 && f < 1.0) => {
                return Err(("noise", "target_fidelity", format!("{f} is not in (0.5, 1)")));
            }
            NoiseSpec::TargetFidelity(_) => {}
        }
        if self.network.input_dim != 2 * self.readout.n_samples {
            return Err((
                "network",
                "input_dim",
                format!(
                    "{} inputs do not match 2 x {} samples per quadrature",
                    self.network.input_dim, self.readout.n_samples
                ),
            ));
        }
        if self.network.output_dim != 2 {
            return Err(("network", "output_dim", "readout networks have two outputs".into()));
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m == 0 || m > self.rabi.shots_per_step) {
            return Err((
                "rabi",
                "m_values",
                format!("M = {m} outside 1..={} traces", self.rabi.shots_per_step),
            ));
        }
        if self.m_values.is_empty() {
            return Err(("rabi", "m_values", "no averaging depths".into()));
        }
        if self.sizes.n_train_per_state < 5 || self.sizes.n_test_per_state < 1 {
            return Err(("dataset", "n_train_per_state", "too few shots".into()));
        }
        if self.sizes.calibration_shots_per_state < 2000 {
            return Err((
                "dataset",
                "calibration_shots_per_state",
                "calibration needs at least 2000 shots per state".into(),
            ));
        }
        if self.backends.is_empty() {
            return Err(("", "backends", "no back-end selected".into()));
        }
        if self.qubit_id.is_empty()
            || !self.qubit_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(("", "qubit_id", "use letters, digits, '_' or '-'".into()));
        }
        Ok(())
    }
}

/// Points at the line defining `key` inside `[section]`, if present.
fn diagnostic(text: &str, origin: &str, section: &str, key: &str, reason: &str) -> String {
    let mut current = String::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        let defines = t
            .split_once('=')
            .is_some_and(|(k, _)| !key.is_empty() && k.trim() == key);
        if defines && current == section {
            return format!(
                "{origin}:{}: invalid `{key}`: {reason}\n  {} | {line}",
                n + 1,
                n + 1
            );
        }
    }
    let at = if section.is_empty() {
        String::new()
    } else {
        format!(" [{section}]")
    };
    if key.is_empty() {
        format!("{origin}{at}: {reason}")
    } else {
        format!("{origin}{at}: invalid `{key}` (preset value): {reason}")
    }
}

macro_rules! patch {
    ($name:ident => $target:ty { $($field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $name {
            $($field: Option<$ty>,)*
        }

        impl $name {
            fn apply(self, t: &mut $target) {
                $(if let Some(v) = self.$field {
                    t.$field = v;
                })*
            }
        }
    };
}

patch!(SystemPatch => SystemParams {
    omega_r: f64, omega_q: f64, g: f64, kappa: f64, t1: f64, t2: f64,
});
patch!(ReadoutPatch => ReadoutConfig {
    omega_ro: f64, omega_if: f64, sample_rate: f64, n_samples: usize, s0: f64, l0: f64, theta_lo: f64,
});
patch!(NetworkPatch => NetworkConfig {
    input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize,
});
patch!(TrainPatch => TrainConfig {
    learning_rate: f64, adam_beta1: f64, adam_beta2: f64, adam_epsilon: f64,
    batch_size: usize, max_epochs: usize, validation_fraction: f64, early_stop_patience: usize,
});
patch!(SizesPatch => Sizes {
    n_train_per_state: usize, n_test_per_state: usize, calibration_shots_per_state: usize,
});

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RabiPatch {
    n_steps: Option<usize>,
    t_total: Option<f64>,
    omega_rabi: Option<f64>,
    envelope_t2: Option<f64>,
    traces: Option<usize>,
    m_values: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoisePatch {
    sigma: Option<f64>,
    target_fidelity: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedsPatch {
    calibration: Option<u64>,
    train_data: Option<u64>,
    test_data: Option<u64>,
    rabi_data: Option<u64>,
    backends: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<Preset>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    qubit_id: Option<String>,
    backends: Option<Vec<Backend>>,
    system: Option<SystemPatch>,
    readout: Option<ReadoutPatch>,
    noise: Option<NoisePatch>,
    rabi: Option<RabiPatch>,
    network: Option<NetworkPatch>,
    train: Option<TrainPatch>,
    dataset: Option<SizesPatch>,
    seeds: Option<SeedsPatch>,
}

impl FileConfig {
    fn apply(self, cfg: &mut RunConfig) {
        if let Some(base) = self.seed {
            cfg.seeds = Seeds::derived(base);
        }
        if let Some(s) = self.seeds {
            let t = &mut cfg.seeds;
            t.calibration = s.calibration.unwrap_or(t.calibration);
            t.train_data = s.train_data.unwrap_or(t.train_data);
            t.test_data = s.test_data.unwrap_or(t.test_data);
            t.rabi_data = s.rabi_data.unwrap_or(t.rabi_data);
            t.backends = s.backends.unwrap_or(t.backends);
        }
        if let Some(dir) = self.output_dir {
            cfg.output_dir = dir;
        }
        if let Some(id) = self.qubit_id {
            cfg.qubit_id = id;
        }
        if let Some(b) = self.backends {
            cfg.backends = b;
        }
        if let Some(p) = self.system {
            p.apply(&mut cfg.system);
        }
        // the probe follows the bare resonance unless placed explicitly
        cfg.readout.omega_ro = cfg.system.omega_r;
        let n_samples_before = cfg.readout.n_samples;
        if let Some(p) = self.readout {
            p.apply(&mut cfg.readout);
        }
        if cfg.readout.n_samples != n_samples_before {
            cfg.network.input_dim = 2 * cfg.readout.n_samples;
        }
        if let Some(n) = self.noise {
            // an explicit sigma wins over a calibration target
            if let Some(f) = n.target_fidelity {
                cfg.noise = NoiseSpec::TargetFidelity(f);
            }
            if let Some(s) = n.sigma {
                cfg.noise = NoiseSpec::Sigma(s);
            }
        }
        if let Some(r) = self.rabi {
            let t = &mut cfg.rabi;
            t.n_steps = r.n_steps.unwrap_or(t.n_steps);
            t.t_total = r.t_total.unwrap_or(t.t_total);
            t.omega_rabi = r.omega_rabi.unwrap_or(t.omega_rabi);
            t.envelope_t2 = r.envelope_t2.or(t.envelope_t2);
            t.shots_per_step = r.traces.unwrap_or(t.shots_per_step);
            if let Some(m) = r.m_values {
                cfg.m_values = m;
            }
        }
        if let Some(p) = self.network {
            p.apply(&mut cfg.network);
        }
        if let Some(p) = self.train {
            p.apply(&mut cfg.train);
        }
        if let Some(p) = self.dataset {
            p.apply(&mut cfg.sizes);
        }
    }
}
