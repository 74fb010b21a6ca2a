//! Binary checkpoint: magic, length-prefixed `key=value` config text, then
//! named tensors as raw little-endian `f64`.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use super::{ModelBundle, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PIXREC01";

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: IndexMap<String, Tensor>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic, not a PIXREC01 checkpoint".into()));
        }
        let n = r.u64()? as usize;
        let config = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
        let count = r.u64()?;
        let mut tensors = IndexMap::new();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l <= bytes.len() / 8)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} has an implausible shape {shape:?}")))?;
            let raw = r.take(len * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if tensors.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { config, tensors })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated at byte {}: wanted {n} more bytes, {} left",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    Ok(fs::write(path, ck.to_bytes())?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

impl ModelBundle {
    /// Config and parameters only.
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.to_text(),
            tensors: self.params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    /// Rebuilds a bundle; tensors not named by the architecture (for
    /// example optimizer state) are ignored, missing ones are an error.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut bundle = Self::new(ModelConfig::from_text(&ck.config)?)?;
        let names: Vec<String> = bundle.params.names().map(str::to_string).collect();
        for name in names {
            let t = ck
                .tensors
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            bundle.params.set(&name, t.clone())?;
        }
        Ok(bundle)
    }
}

pub fn save_bundle(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    write_checkpoint(path, &bundle.to_checkpoint())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    ModelBundle::from_checkpoint(&read_checkpoint(path)?)
}
