//! Model checkpoint files.
//!
//! Layout (little-endian):
//!
//! | size   | field                                      |
//! |--------|--------------------------------------------|
//! | 4      | magic `b"AHCK"`                            |
//! | 4      | `u32` version (1)                          |
//! | 4      | model tag, `b"DFC "` or `b"EFC "`          |
//! | 4 + n  | `u32` length, then the config as JSON      |
//! | 4      | `u32` tensor count                         |
//!
//! Then for each tensor: `u16` name length, UTF-8 name, `u32` rows,
//! `u32` cols, and `rows · cols` row-major `f64` values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dfc::{DfcConfig, DfcModel};
use crate::efc::{EfcConfig, EfcModel};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AHCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint contents before they are bound to a model.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCheckpoint {
    pub tag: [u8; 4],
    pub config_json: String,
    pub tensors: Vec<(String, Matrix)>,
}

impl RawCheckpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&(self.config_json.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "checkpoint header")?.try_into().expect("4 bytes");
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                what: "checkpoint",
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = r.u32("checkpoint header")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "checkpoint",
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let tag: [u8; 4] = r.take(4, "checkpoint header")?.try_into().expect("4 bytes");
        let n = r.u32("checkpoint config")? as usize;
        let config_json = String::from_utf8(r.take(n, "checkpoint config")?.to_vec())
            .map_err(|_| malformed("config is not UTF-8"))?;
        let count = r.u32("checkpoint tensors")? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2, "tensor name")?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8(r.take(len, "tensor name")?.to_vec())
                .map_err(|_| malformed("tensor name is not UTF-8"))?;
            let (rows, cols) = (r.u32("tensor shape")? as usize, r.u32("tensor shape")? as usize);
            let data = r
                .take(8 * rows * cols, "tensor values")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(malformed(&format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(RawCheckpoint {
            tag,
            config_json,
            tensors,
        })
    }
}

fn malformed(reason: &str) -> Error {
    Error::Malformed {
        what: "checkpoint",
        reason: reason.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated {
                what,
                needed: self.pos.saturating_add(n),
                available: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

fn tensors_of(store: &ParamStore) -> Vec<(String, Matrix)> {
    store
        .ids()
        .map(|id| (store.name(id).to_string(), store.value(id).clone()))
        .collect()
}

/// Copies named tensors into `store`, which must hold exactly the same names and shapes.
fn load_tensors(store: &mut ParamStore, tensors: Vec<(String, Matrix)>) -> Result<()> {
    if tensors.len() != store.len() {
        return Err(malformed(&format!(
            "{} tensors, model has {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, m) in tensors {
        let id = store
            .lookup(&name)
            .ok_or_else(|| malformed(&format!("unknown tensor `{name}`")))?;
        store.set_value(id, m)?;
    }
    Ok(())
}

/// A model that can be written to and read from a checkpoint.
pub trait Checkpoint: Sized {
    const TAG: [u8; 4];
    type Config: Serialize + DeserializeOwned;

    fn config(&self) -> &Self::Config;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn build(config: Self::Config) -> Result<Self>;

    fn to_checkpoint(&self) -> Vec<u8> {
        RawCheckpoint {
            tag: Self::TAG,
            config_json: serde_json::to_string(self.config()).expect("configs serialize"),
            tensors: tensors_of(self.store()),
        }
        .encode()
    }

    fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let raw = RawCheckpoint::decode(bytes)?;
        if raw.tag != Self::TAG {
            return Err(malformed(&format!(
                "model tag {:?}, expected {:?}",
                String::from_utf8_lossy(&raw.tag),
                String::from_utf8_lossy(&Self::TAG)
            )));
        }
        let config = serde_json::from_str(&raw.config_json).map_err(|e| malformed(&format!("config: {e}")))?;
        let mut model = Self::build(config)?;
        load_tensors(model.store_mut(), raw.tensors)?;
        Ok(model)
    }

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

impl Checkpoint for DfcModel {
    const TAG: [u8; 4] = *b"DFC ";
    type Config = DfcConfig;

    fn config(&self) -> &DfcConfig {
        &self.config
    }
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn build(config: DfcConfig) -> Result<Self> {
        DfcModel::new(config, 0)
    }
}

impl Checkpoint for EfcModel {
    const TAG: [u8; 4] = *b"EFC ";
    type Config = EfcConfig;

    fn config(&self) -> &EfcConfig {
        &self.config
    }
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn build(config: EfcConfig) -> Result<Self> {
        EfcModel::new(config, 0)
    }
}
