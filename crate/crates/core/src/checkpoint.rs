//! Single-file checkpoint archive shared by the GAN and the detector.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"THSYNCK1" | u64 header_len | header JSON | f64 tensor data ... | SHA-256 of everything before
//! ```
//!
//! The JSON header holds the archive kind and free-form metadata, followed
//! by the name/shape index of the tensors, which
//! follow in index order as raw `f64` values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thermsynth_autograd::{ParamStore, Tensor};

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"THSYNCK1";

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl Archive {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: BTreeMap::new(),
        }
    }

    /// Adds every entry of `store` under `prefix`.
    pub fn put_params(&mut self, prefix: &str, store: &ParamStore) {
        for (name, t) in store.iter() {
            self.tensors.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    pub fn put_map(&mut self, prefix: &str, map: &BTreeMap<String, Tensor>) {
        for (name, t) in map {
            self.tensors.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Entries stored under `prefix`, with the prefix removed.
    pub fn take_map(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        self.tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn take_params(&self, prefix: &str) -> ParamStore {
        let mut store = ParamStore::new();
        for (k, v) in self.take_map(prefix) {
            store.insert(k, v);
        }
        store
    }

    pub fn meta_field<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata field `{key}`")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Checkpoint(format!("metadata field `{key}`: {e}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(json.len() + 48 + 8 * self.tensors.values().map(Tensor::len).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.tensors.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < MAGIC.len() + 8 + 32 || &bytes[..8] != MAGIC {
            return Err(bad("not a thermsynth checkpoint (bad magic)"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch (truncated or corrupt file)"));
        }
        let header_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| bad("header length exceeds file size"))?;
        let header: Header =
            serde_json::from_slice(&body[16..header_end]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut offset = header_end;
        let mut tensors = BTreeMap::new();
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let end = offset + 8 * n;
            if end > body.len() {
                return Err(bad("tensor data truncated"));
            }
            let data = body[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset = end;
            tensors.insert(entry.name, Tensor::from_vec(&entry.shape, data)?);
        }
        if offset != body.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a `{kind}` checkpoint, found `{}`", self.kind)));
        }
        Ok(())
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hex SHA-256 over parameter names, shapes and raw values.
pub fn params_digest(store: &ParamStore) -> String {
    let mut h = Sha256::new();
    for (name, t) in store.iter() {
        h.update(name.as_bytes());
        h.update([0u8]);
        for d in t.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
