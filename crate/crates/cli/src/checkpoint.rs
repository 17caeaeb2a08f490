//! Binary checkpoint: magic, version, JSON header, epoch, seed, then named
//! `f64` tensors. All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use msmae::model::ModelConfig;
use msmae::train::Task;
use msmae::{Error, ParamStore};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MAGIC: &[u8; 8] = b"MSMAE-CK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: CheckpointKind,
    pub model: ModelConfig,
    /// Scale levels of the stored upsampling head (pre-training only).
    pub levels: usize,
    /// Classifier pooling; always the class token.
    pub pooling: String,
    pub n_classes: Option<usize>,
    pub task: Option<Task>,
    pub run: RunConfig,
}

pub type NamedTensor = (String, Vec<usize>, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub epoch: u32,
    pub seed: u64,
    pub tensors: Vec<NamedTensor>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_u32(r: &mut impl Read) -> msmae::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> msmae::Result<u64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read, n: usize, what: &str) -> msmae::Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(format_err(format!("truncated {what}")));
    }
    Ok(buf)
}

impl Checkpoint {
    pub fn from_stores(meta: CheckpointMeta, epoch: u32, seed: u64, stores: &[&ParamStore]) -> Self {
        Self {
            meta,
            epoch,
            seed,
            tensors: stores.iter().flat_map(|s| s.snapshot()).collect(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> msmae::Result<()> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| format_err(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, shape, data) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> msmae::Result<Self> {
        let magic = read_bytes(r, 8, "magic")?;
        if magic != MAGIC {
            return Err(format_err("not a checkpoint (bad magic)"));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(format_err(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = read_u32(r)? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(&read_bytes(r, meta_len, "header")?)
            .map_err(|e| format_err(format!("bad header: {e}")))?;
        let epoch = read_u32(r)?;
        let seed = read_u64(r)?;
        let count = read_u32(r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let name = String::from_utf8(read_bytes(r, name_len, "tensor name")?)
                .map_err(|_| format_err("tensor name is not UTF-8"))?;
            let rank = read_u32(r)? as usize;
            let shape = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<msmae::Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = read_bytes(r, n * 8, "tensor data")?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, shape, data));
        }
        Ok(Self {
            meta,
            epoch,
            seed,
            tensors,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> msmae::Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> msmae::Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Loads every tensor of `store` by name. Any store tensor that is
    /// missing or has a different shape is reported as a mismatch.
    pub fn restore(&self, store: &ParamStore) -> msmae::Result<()> {
        let missing: Vec<String> = store
            .names()
            .filter(|n| !self.tensors.iter().any(|(m, _, _)| m == n))
            .map(str::to_string)
            .collect();
        store.load_matching(&self.tensors)?;
        if !missing.is_empty() {
            return Err(Error::CheckpointMismatch { names: missing });
        }
        Ok(())
    }
}
