//! `QRTD` dataset files and their JSON sidecars.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "QRTD" | version u16 | n_samples u32 | record count u64
//! per record: label u8 (0 ground, 1 excited, 2 untagged) | time_step f64 (NaN if none)
//!             | seed u64 | i_samples f64 * n_samples | q_samples f64 * n_samples
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::{
    Eigenstate, NoiseModel, RabiConfig, ReadoutConfig, ShotRecord, SystemParams, Waveform,
};

pub const DATASET_MAGIC: &[u8; 4] = b"QRTD";
pub const DATASET_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_samples: usize,
    pub records: Vec<ShotRecord>,
}

impl Dataset {
    pub fn new(n_samples: usize, records: Vec<ShotRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.waveform.i_samples.len() != n_samples || r.waveform.q_samples.len() != n_samples {
                return Err(Error::at_shot(
                    i,
                    Error::LengthMismatch {
                        expected: n_samples,
                        actual: r.waveform.i_samples.len(),
                    },
                ));
            }
        }
        Ok(Self { n_samples, records })
    }

    pub fn waveforms(&self) -> Vec<Waveform> {
        self.records.iter().map(|r| r.waveform.clone()).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_u16::<LE>(DATASET_VERSION)?;
        w.write_u32::<LE>(self.n_samples as u32)?;
        w.write_u64::<LE>(self.records.len() as u64)?;
        for r in &self.records {
            w.write_u8(match r.label {
                Some(Eigenstate::Ground) => 0,
                Some(Eigenstate::Excited) => 1,
                None => 2,
            })?;
            w.write_f64::<LE>(r.time_step.unwrap_or(f64::NAN))?;
            w.write_u64::<LE>(r.seed)?;
            for &v in r.waveform.i_samples.iter().chain(&r.waveform.q_samples) {
                w.write_f64::<LE>(v)?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> std::result::Result<Self, String> {
        let io = |e: std::io::Error| e.to_string();
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != DATASET_MAGIC {
            return Err(format!("bad magic {magic:?}"));
        }
        let version = r.read_u16::<LE>().map_err(io)?;
        if version != DATASET_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let n_samples = r.read_u32::<LE>().map_err(io)? as usize;
        let count = r.read_u64::<LE>().map_err(io)?;
        let mut records = Vec::new();
        for idx in 0..count {
            let label = match r.read_u8().map_err(io)? {
                0 => Some(Eigenstate::Ground),
                1 => Some(Eigenstate::Excited),
                2 => None,
                other => return Err(format!("record {idx}: bad label byte {other}")),
            };
            let t = r.read_f64::<LE>().map_err(io)?;
            let seed = r.read_u64::<LE>().map_err(io)?;
            let mut i_samples = vec![0.0; n_samples];
            let mut q_samples = vec![0.0; n_samples];
            r.read_f64_into::<LE>(&mut i_samples)
                .map_err(|e| format!("record {idx}: {e}"))?;
            r.read_f64_into::<LE>(&mut q_samples)
                .map_err(|e| format!("record {idx}: {e}"))?;
            records.push(ShotRecord {
                waveform: Waveform {
                    i_samples,
                    q_samples,
                },
                label,
                time_step: (!t.is_nan()).then_some(t),
                seed,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io)? != 0 {
            return Err("trailing bytes after last record".into());
        }
        Ok(Self { n_samples, records })
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    data.write_to(BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::read_from(BufReader::new(f)).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

/// What a dataset file holds and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: String,
    pub system: SystemParams,
    pub readout: ReadoutConfig,
    pub noise: NoiseModel,
    pub rabi: Option<RabiConfig>,
    pub base_seed: u64,
    pub n_records: usize,
}

/// `train.qrtd` -> `train.qrtd.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_meta(path: &Path, meta: &DatasetMeta) -> Result<()> {
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(meta)? + "\n";
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
