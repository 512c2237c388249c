use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use qrt_core::dataset::{
    file_hash, read_dataset, read_meta, write_dataset, write_meta, Dataset, DatasetMeta,
};
use qrt_core::experiments::{
    assignment_table, rabi_fidelity_table, run_rabi_experiment, train_backends,
    variance_report, AssignmentTable, Backends, ConfusionCounts, RabiFidelityEntry,
    VarianceReport,
};
use qrt_core::neural::TrainReport;
use qrt_core::raw_readout::evaluate_labeled;
use qrt_core::report::{curves_csv, sig12, to_json};
use qrt_core::signal::{calibrate_noise_to_fidelity, NoiseCalibration, Synthesizer};
use qrt_core::{
    demodulate_batch, Backend, Discriminant, FnnModel, ModuleRegistry, NoiseModel, RawReadout,
    ReadoutConfig,
};
use serde::{Deserialize, Serialize};

use crate::config::{NoiseSpec, RunConfig};
use crate::error::CliError;

pub const TRAIN_FILE: &str = "train.qrtd";
pub const TEST_FILE: &str = "test.qrtd";
pub const RABI_FILE: &str = "rabi.qrtd";
pub const MODELS_DIR: &str = "models";
pub const FNN_FILE: &str = "fnn.qrtm";
pub const RAW_FILE: &str = "raw.json";

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn load_dataset(path: &Path) -> Result<(Dataset, DatasetMeta), CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("dataset {} does not exist", path.display())));
    }
    let data = read_dataset(path)?;
    let meta = read_meta(path)?;
    if meta.readout.n_samples != data.n_samples || meta.n_records != data.records.len() {
        return Err(CliError::Data(format!(
            "{} disagrees with its metadata sidecar",
            path.display()
        )));
    }
    Ok((data, meta))
}

/// Sigma from the config, calibrating first when a target fidelity is given.
pub fn resolve_noise(cfg: &RunConfig) -> Result<(NoiseModel, Option<NoiseCalibration>), CliError> {
    match cfg.noise {
        NoiseSpec::Sigma(s) => Ok((NoiseModel::new(s)?, None)),
        NoiseSpec::TargetFidelity(target) => {
            let cal = calibrate(cfg, target)?;
            Ok((cal.noise, Some(cal)))
        }
    }
}

fn calibrate(cfg: &RunConfig, target: f64) -> Result<NoiseCalibration, CliError> {
    let cal = calibrate_noise_to_fidelity(
        target,
        &cfg.system,
        &cfg.readout,
        cfg.sizes.calibration_shots_per_state,
        cfg.seeds.calibration,
    )?;
    info!(
        "calibrated sigma {:.6} for raw fidelity {:.4} (target {target})",
        cal.noise.sigma, cal.measured_fa
    );
    Ok(cal)
}

pub fn calibrate_noise(cfg: &RunConfig, target: Option<f64>) -> Result<(), CliError> {
    let target = match (target, cfg.noise) {
        (Some(t), _) | (None, NoiseSpec::TargetFidelity(t)) => t,
        (None, NoiseSpec::Sigma(_)) => {
            return Err(CliError::Config(
                "no target fidelity: pass --target or set [noise] target_fidelity".into(),
            ))
        }
    };
    if !(target > 0.5 && target < 1.0) {
        return Err(CliError::Config(format!("target fidelity {target} is not in (0.5, 1)")));
    }
    let cal = calibrate(cfg, target)?;
    ensure_dir(&cfg.output_dir)?;
    write_text(&cfg.output_dir.join("calibration.json"), &to_json(&cal)?)?;
    println!("sigma = {}  (raw F_A {})", sig12(cal.noise.sigma), sig12(cal.measured_fa));
    Ok(())
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    config: &'a RunConfig,
    sigma: f64,
    calibration: Option<NoiseCalibration>,
    /// File name to hex SHA-256.
    files: BTreeMap<String, String>,
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_dir(&cfg.output_dir)?;
    let (noise, calibration) = resolve_noise(cfg)?;
    let s = Synthesizer::new(&cfg.system, &cfg.readout, &noise)?;
    let sets = [
        (TRAIN_FILE, "train", s.labeled_set(cfg.sizes.n_train_per_state, cfg.seeds.train_data), cfg.seeds.train_data, None),
        (TEST_FILE, "test", s.labeled_set(cfg.sizes.n_test_per_state, cfg.seeds.test_data), cfg.seeds.test_data, None),
        (RABI_FILE, "rabi", s.rabi_set(&cfg.rabi, cfg.seeds.rabi_data)?, cfg.seeds.rabi_data, Some(cfg.rabi)),
    ];
    let mut files = BTreeMap::new();
    for (name, kind, records, base_seed, rabi) in sets {
        let path = cfg.output_dir.join(name);
        let meta = DatasetMeta {
            kind: kind.into(),
            system: cfg.system,
            readout: cfg.readout,
            noise,
            rabi,
            base_seed,
            n_records: records.len(),
        };
        write_dataset(&path, &Dataset::new(cfg.readout.n_samples, records)?)?;
        write_meta(&path, &meta)?;
        files.insert(name.to_string(), file_hash(&path)?);
        info!("wrote {} ({} records)", path.display(), meta.n_records);
    }
    let manifest = SynthManifest {
        config: cfg,
        sigma: noise.sigma,
        calibration,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(qrt_core::Error::from)? + "\n";
    write_text(&cfg.output_dir.join("manifest.json"), &text)?;
    println!("datasets written to {} (sigma {})", cfg.output_dir.display(), sig12(noise.sigma));
    Ok(())
}

/// Persisted raw discriminant with the acquisition settings it demodulates.
#[derive(Debug, Serialize, Deserialize)]
struct RawModel {
    discriminant: Discriminant,
    readout: ReadoutConfig,
}

pub fn models_dir(cfg: &RunConfig, dir: Option<PathBuf>) -> PathBuf {
    dir.unwrap_or_else(|| cfg.output_dir.join(MODELS_DIR))
}

pub fn dataset_path(cfg: &RunConfig, path: Option<PathBuf>, default: &str) -> PathBuf {
    path.unwrap_or_else(|| cfg.output_dir.join(default))
}

pub fn train(cfg: &RunConfig, dataset: &Path, which: &[Backend], dir: &Path) -> Result<(), CliError> {
    let (data, meta) = load_dataset(dataset)?;
    if 2 * data.n_samples != cfg.network.input_dim {
        return Err(CliError::Data(format!(
            "{} has {} samples per quadrature but the network expects {} inputs",
            dataset.display(),
            data.n_samples,
            cfg.network.input_dim
        )));
    }
    let (backends, reports) = train_backends(
        &data.records,
        &meta.readout,
        &cfg.network,
        &cfg.train,
        &cfg.qubit_id,
        which,
        cfg.seeds.backends,
    )?;
    ensure_dir(dir)?;
    if let Some(raw) = &backends.raw {
        let model = RawModel {
            discriminant: raw.discriminant,
            readout: meta.readout,
        };
        write_text(&dir.join(RAW_FILE), &to_json(&model)?)?;
    }
    if let Some(fnn) = &backends.fnn {
        fnn.save(&dir.join(FNN_FILE))?;
    }
    if let Some(trmnn) = backends.trmnn {
        // keep modules of other qubits already in this directory
        let mut registry = if dir.join("registry.json").exists() {
            ModuleRegistry::load(dir)?
        } else {
            ModuleRegistry::new()
        };
        let id = trmnn.qubit_id.clone();
        registry.register(trmnn);
        registry.set_dataset_hash(&id, file_hash(dataset)?);
        registry.save(dir)?;
    }
    let report_path = dir.join("train_report.json");
    let mut all: BTreeMap<Backend, TrainReport> = if report_path.exists() {
        serde_json::from_str(&read_text(&report_path)?).map_err(qrt_core::Error::from)?
    } else {
        BTreeMap::new()
    };
    for (b, r) in reports {
        println!(
            "{b}: {} epochs, best epoch {}, validation accuracy {}",
            r.epochs,
            r.best_epoch,
            sig12(r.validation_accuracy[r.best_epoch.max(1) - 1])
        );
        all.insert(b, r);
    }
    write_text(&report_path, &to_json(&all)?)?;
    Ok(())
}

/// Loads the requested back-ends from a model directory.
fn load_backends(cfg: &RunConfig, dir: &Path, n_samples: usize) -> Result<Backends, CliError> {
    let mut b = Backends::default();
    for &backend in &cfg.backends {
        let missing = |p: &Path| CliError::Data(format!("no {backend} model at {}", p.display()));
        let mismatch = |expected: usize| {
            CliError::Data(format!(
                "{backend} model expects {expected} samples per quadrature, dataset has {n_samples}"
            ))
        };
        match backend {
            Backend::Raw => {
                let p = dir.join(RAW_FILE);
                if !p.exists() {
                    return Err(missing(&p));
                }
                let m: RawModel = serde_json::from_str(&read_text(&p)?).map_err(qrt_core::Error::from)?;
                if m.readout.n_samples != n_samples {
                    return Err(mismatch(m.readout.n_samples));
                }
                b.raw = Some(RawReadout::new(m.discriminant, &m.readout));
            }
            Backend::Fnn => {
                let p = dir.join(FNN_FILE);
                if !p.exists() {
                    return Err(missing(&p));
                }
                let m = FnnModel::load(&p)?;
                if m.network.input_dim() != 2 * n_samples {
                    return Err(mismatch(m.network.input_dim() / 2));
                }
                b.fnn = Some(m);
            }
            Backend::Trmnn => {
                let p = dir.join("registry.json");
                if !p.exists() {
                    return Err(missing(&p));
                }
                let reg = ModuleRegistry::load(dir)?;
                let m = reg.get(&cfg.qubit_id).cloned().ok_or_else(|| {
                    CliError::Data(format!("registry has no module for qubit `{}`", cfg.qubit_id))
                })?;
                if m.network.input_dim() != 2 * n_samples {
                    return Err(mismatch(m.network.input_dim() / 2));
                }
                b.trmnn = Some(m);
            }
        }
    }
    Ok(b)
}

#[derive(Serialize, Deserialize)]
pub struct AssignmentReport {
    pub n_ground: u64,
    pub n_excited: u64,
    pub sigma: f64,
    pub backends: AssignmentTable,
}

pub fn eval(cfg: &RunConfig, dataset: &Path, dir: &Path) -> Result<(), CliError> {
    let (data, meta) = load_dataset(dataset)?;
    let backends = load_backends(cfg, dir, data.n_samples)?;
    let table = assignment_table(&backends, &data.records)?;
    let any = table.values().next().map(|r| r.confusion).unwrap_or_default();
    let report = AssignmentReport {
        n_ground: any.total_ground(),
        n_excited: any.total_excited(),
        sigma: meta.noise.sigma,
        backends: table,
    };
    for (b, r) in &report.backends {
        println!("{b}: F_A = {}", sig12(r.assignment_fidelity));
    }
    ensure_dir(&cfg.output_dir)?;
    write_text(&cfg.output_dir.join("assignment.json"), &to_json(&report)?)
}

#[derive(Serialize, Deserialize)]
pub struct RabiFidelityReport {
    pub sigma: f64,
    pub entries: Vec<RabiFidelityEntry>,
}

pub fn rabi(cfg: &RunConfig, dataset: &Path, dir: &Path) -> Result<(), CliError> {
    let (data, meta) = load_dataset(dataset)?;
    let rabi = meta
        .rabi
        .ok_or_else(|| CliError::Data(format!("{} is not a Rabi dataset", dataset.display())))?;
    let backends = load_backends(cfg, dir, data.n_samples)?;
    let curves = run_rabi_experiment(&rabi, &data.records, &backends, &cfg.m_values)?;
    let entries = rabi_fidelity_table(&curves)?;
    for e in entries.iter().filter(|e| !e.converged) {
        warn!("sine fit for {} at M = {} did not converge", e.backend, e.m);
    }
    let variance = variance_report(&curves, None)?;
    ensure_dir(&cfg.output_dir)?;
    write_text(&cfg.output_dir.join("rabi_curves.csv"), &curves_csv(&curves))?;
    write_text(
        &cfg.output_dir.join("rabi_fidelity.json"),
        &to_json(&RabiFidelityReport {
            sigma: meta.noise.sigma,
            entries,
        })?,
    )?;
    write_text(&cfg.output_dir.join("variance.json"), &to_json(&variance)?)?;
    println!("Rabi reports written to {}", cfg.output_dir.display());
    Ok(())
}

/// Plain-text tables from the JSON reports present in the output directory.
pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    let mut out = String::new();
    let mut found = false;
    let path = dir.join("assignment.json");
    if path.exists() {
        found = true;
        let a: AssignmentReport = serde_json::from_str(&read_text(&path)?).map_err(qrt_core::Error::from)?;
        writeln!(out, "Assignment fidelity (sigma {})", a.sigma).unwrap();
        writeln!(out, "{:<8} {:>10}", "backend", "F_A").unwrap();
        for (b, r) in &a.backends {
            writeln!(out, "{:<8} {:>10.4}", b.name(), r.assignment_fidelity).unwrap();
        }
        out.push('\n');
    }
    let path = dir.join("rabi_fidelity.json");
    if path.exists() {
        found = true;
        let r: RabiFidelityReport = serde_json::from_str(&read_text(&path)?).map_err(qrt_core::Error::from)?;
        let mut ms: Vec<usize> = r.entries.iter().map(|e| e.m).collect();
        ms.sort_unstable();
        ms.dedup();
        writeln!(out, "Rabi fidelity").unwrap();
        write!(out, "{:<8}", "backend").unwrap();
        for m in &ms {
            write!(out, " {:>10}", format!("M={m}")).unwrap();
        }
        out.push('\n');
        for b in Backend::ALL {
            if !r.entries.iter().any(|e| e.backend == b) {
                continue;
            }
            write!(out, "{:<8}", b.name()).unwrap();
            for m in &ms {
                match r.entries.iter().find(|e| e.backend == b && e.m == *m) {
                    Some(e) => write!(out, " {:>10.4}", e.rabi_fidelity).unwrap(),
                    None => write!(out, " {:>10}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let path = dir.join("variance.json");
    if path.exists() {
        found = true;
        let v: VarianceReport = serde_json::from_str(&read_text(&path)?).map_err(qrt_core::Error::from)?;
        writeln!(out, "Time-averaged variance (normalized to {})", v.normalization).unwrap();
        writeln!(out, "{:<8} {:>6} {:>12}", "backend", "M", "variance").unwrap();
        for e in &v.entries {
            writeln!(out, "{:<8} {:>6} {:>12.4}", e.backend.name(), e.m, e.normalized).unwrap();
        }
    }
    if !found {
        return Err(CliError::Data(format!(
            "no reports in {}; run `eval` or `rabi` first",
            dir.display()
        )));
    }
    print!("{out}");
    write_text(&dir.join("report.txt"), &out)
}

pub fn demod(dataset: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let (data, meta) = load_dataset(dataset)?;
    let pts = demodulate_batch(&data.waveforms(), &meta.readout)?;
    let mut csv = String::from("shot_index,I,Q\n");
    for (k, p) in pts.iter().enumerate() {
        writeln!(csv, "{k},{},{}", sig12(p.i), sig12(p.q)).unwrap();
    }
    match output {
        Some(path) => write_text(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct RawEvalReport {
    mu_g: qrt_core::IqPoint,
    mu_e: qrt_core::IqPoint,
    threshold: f64,
    #[serde(rename = "F_A")]
    f_a: f64,
    confusion: ConfusionCounts,
}

pub fn raw_eval(cfg: &RunConfig, dataset: &Path, dir: &Path) -> Result<(), CliError> {
    let (data, meta) = load_dataset(dataset)?;
    let only_raw = RunConfig {
        backends: vec![Backend::Raw],
        ..cfg.clone()
    };
    let raw = load_backends(&only_raw, dir, data.n_samples)?.raw.expect("requested");
    let labels: Vec<_> = data
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.label
                .ok_or_else(|| CliError::Data(format!("record {i} of {} has no label", dataset.display())))
        })
        .collect::<Result<_, _>>()?;
    let pts = demodulate_batch(&data.waveforms(), &meta.readout)?;
    let confusion = evaluate_labeled(&raw.discriminant, &pts, &labels)?;
    let d = raw.discriminant;
    let text = to_json(&RawEvalReport {
        mu_g: d.mu_g,
        mu_e: d.mu_e,
        threshold: d.threshold,
        f_a: confusion.assignment_fidelity()?,
        confusion,
    })?;
    print!("{text}");
    ensure_dir(&cfg.output_dir)?;
    write_text(&cfg.output_dir.join("raw_eval.json"), &text)
}

pub fn run_all(cfg: &RunConfig) -> Result<(), CliError> {
    synth(cfg)?;
    let models = models_dir(cfg, None);
    train(cfg, &cfg.output_dir.join(TRAIN_FILE), &cfg.backends, &models)?;
    eval(cfg, &cfg.output_dir.join(TEST_FILE), &models)?;
    rabi(cfg, &cfg.output_dir.join(RABI_FILE), &models)?;
    report(cfg)
}
