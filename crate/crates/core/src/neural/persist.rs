//! `QRTM` model files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "QRTM" | version u16
//! input_dim u32 | n_hidden u32 | hidden_dims u32 * n_hidden | output_dim u32
//! activation u8 (0 = relu) | init_seed u64
//! mean_i f64 | std_i f64 | mean_q f64 | std_q f64
//! per layer: weights f64 * (fan_out * fan_in), row-major | bias f64 * fan_out
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{Activation, Dense, Network, NetworkConfig, Normalization};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"QRTM";
pub const MODEL_VERSION: u16 = 1;

/// A network together with the input standardization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub network: Network,
    pub normalization: Normalization,
}

impl ModelFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cfg = &self.network.config;
        w.write_all(MODEL_MAGIC)?;
        w.write_u16::<LE>(MODEL_VERSION)?;
        w.write_u32::<LE>(cfg.input_dim as u32)?;
        w.write_u32::<LE>(cfg.hidden_dims.len() as u32)?;
        for &d in &cfg.hidden_dims {
            w.write_u32::<LE>(d as u32)?;
        }
        w.write_u32::<LE>(cfg.output_dim as u32)?;
        w.write_u8(match cfg.activation {
            Activation::Relu => 0,
        })?;
        w.write_u64::<LE>(cfg.init_seed)?;
        let n = &self.normalization;
        for v in [n.mean_i, n.std_i, n.mean_q, n.std_q] {
            w.write_f64::<LE>(v)?;
        }
        for layer in &self.network.layers {
            for &v in layer.weights.iter() {
                w.write_f64::<LE>(v)?;
            }
            for &v in layer.bias.iter() {
                w.write_f64::<LE>(v)?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> std::result::Result<Self, String> {
        let io = |e: std::io::Error| e.to_string();
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MODEL_MAGIC {
            return Err(format!("bad magic {magic:?}"));
        }
        let version = r.read_u16::<LE>().map_err(io)?;
        if version != MODEL_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let input_dim = r.read_u32::<LE>().map_err(io)? as usize;
        let n_hidden = r.read_u32::<LE>().map_err(io)? as usize;
        if n_hidden > 1024 {
            return Err(format!("implausible hidden layer count {n_hidden}"));
        }
        let hidden_dims = (0..n_hidden)
            .map(|_| r.read_u32::<LE>().map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(io)?;
        let output_dim = r.read_u32::<LE>().map_err(io)? as usize;
        let activation = match r.read_u8().map_err(io)? {
            0 => Activation::Relu,
            other => return Err(format!("unknown activation code {other}")),
        };
        let init_seed = r.read_u64::<LE>().map_err(io)?;
        let mut norm = [0.0; 4];
        for v in &mut norm {
            *v = r.read_f64::<LE>().map_err(io)?;
        }
        let config = NetworkConfig {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
            init_seed,
        };
        config.validate().map_err(|e| e.to_string())?;
        let mut layers = Vec::new();
        for (fan_in, fan_out) in config.layer_shapes() {
            let mut w = vec![0.0; fan_in * fan_out];
            r.read_f64_into::<LE>(&mut w).map_err(io)?;
            let mut b = vec![0.0; fan_out];
            r.read_f64_into::<LE>(&mut b).map_err(io)?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((fan_out, fan_in), w).expect("sized"),
                bias: Array1::from(b),
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io)? != 0 {
            return Err("trailing bytes after parameter blocks".into());
        }
        let network = Network::from_layers(config, layers).map_err(|e| e.to_string())?;
        if !network.is_finite() {
            return Err("non-finite parameters".into());
        }
        Ok(Self {
            network,
            normalization: Normalization {
                mean_i: norm[0],
                std_i: norm[1],
                mean_q: norm[2],
                std_q: norm[3],
            },
        })
    }
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    model
        .write_to(BufWriter::new(f))
        .map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    ModelFile::read_from(BufReader::new(f)).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}
