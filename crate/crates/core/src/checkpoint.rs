//! Self-describing checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "DCNVCKPT"
//! version      u32      CHECKPOINT_VERSION
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON: network spec plus one entry
//!              per learnable layer (name, kind, frozen, shapes)
//! tensors      per layer, in header order: weight, bias, weight velocity,
//!              bias velocity, each in the raw tensor format
//! ```

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netspec::{LayerParams, NetworkSpec, ParamKind, ParamStore};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"DCNVCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    kind: ParamKind,
    frozen: bool,
    weight_shape: Vec<usize>,
    bias_shape: Vec<usize>,
}

/// A network spec with its parameters, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: ParamStore) -> Result<Self> {
        params.matches(&spec)?;
        Ok(Self { spec, params })
    }

    /// Learnable trunk layers, heads excluded.
    pub fn trunk_layers(&self) -> impl Iterator<Item = &LayerParams> {
        self.params.layers.iter().filter(|l| l.kind != ParamKind::Head)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = Header {
            spec: self.spec.clone(),
            layers: self
                .params
                .layers
                .iter()
                .map(|l| LayerEntry {
                    name: l.name.clone(),
                    kind: l.kind,
                    frozen: l.frozen,
                    weight_shape: l.weight.shape().to_vec(),
                    bias_shape: l.bias.shape().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&header)
            .map_err(|e| Error::format(format!("encoding checkpoint header: {e}")))?;
        let io = |e| Error::format(format!("writing checkpoint: {e}"));
        w.write_all(&CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(text.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(text.as_bytes()).map_err(io)?;
        for l in &self.params.layers {
            for t in [&l.weight, &l.bias, &l.weight_velocity, &l.bias_velocity] {
                t.write_to(w).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let trunc = |e: std::io::Error| Error::format(format!("truncated checkpoint: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(trunc)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format("not a checkpoint file (bad magic)"));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v).map_err(trunc)?;
        let version = u32::from_le_bytes(v);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(trunc)?;
        let len = u64::from_le_bytes(len);
        if len > (1 << 30) {
            return Err(Error::format(format!("implausible header length {len}")));
        }
        let mut text = vec![0u8; len as usize];
        r.read_exact(&mut text).map_err(trunc)?;
        let header: Header = serde_json::from_slice(&text)
            .map_err(|e| Error::format(format!("bad checkpoint header: {e}")))?;
        header
            .spec
            .validate()
            .map_err(|e| Error::format(format!("checkpoint spec invalid: {e}")))?;

        let mut layers = Vec::with_capacity(header.layers.len());
        for entry in header.layers {
            let mut next = |expect: &[usize], what: &str| -> Result<Tensor> {
                let t = Tensor::read_from(r)?;
                if t.shape() != expect {
                    return Err(Error::format(format!(
                        "layer {} {what} has shape {:?}, header says {expect:?}",
                        entry.name,
                        t.shape()
                    )));
                }
                Ok(t)
            };
            let weight = next(&entry.weight_shape, "weight")?;
            let bias = next(&entry.bias_shape, "bias")?;
            let weight_velocity = next(&entry.weight_shape, "weight velocity")?;
            let bias_velocity = next(&entry.bias_shape, "bias velocity")?;
            layers.push(LayerParams {
                name: entry.name,
                kind: entry.kind,
                weight,
                bias,
                weight_velocity,
                bias_velocity,
                frozen: entry.frozen,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(trunc)? != 0 {
            return Err(Error::format("trailing bytes after checkpoint"));
        }
        let params = ParamStore { layers };
        params
            .matches(&header.spec)
            .map_err(|e| Error::format(format!("checkpoint tensors disagree with spec: {e}")))?;
        Ok(Self {
            spec: header.spec,
            params,
        })
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }
}

pub fn save_checkpoint(spec: &NetworkSpec, params: &ParamStore, path: &Path) -> Result<()> {
    let ckpt = Checkpoint::new(spec.clone(), params.clone())?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    ckpt.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
