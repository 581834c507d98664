//! Flat tensor storage: a JSON manifest describing named tensors (shape,
//! element kind, byte offset) next to one binary blob of little-endian
//! `f64` values. Complex tensors store interleaved `(re, im)` pairs,
//! row-major. Datasets and parameter checkpoints share this convention.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    /// Logical shape (for complex tensors, in complex elements).
    pub shape: Vec<usize>,
    pub complex: bool,
    /// Offset into the blob, counted in f64 slots.
    pub offset: u64,
    /// Number of f64 slots occupied.
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Caller-defined header (scenario fields, model config, ...).
    pub header: serde_json::Value,
    pub tensors: Vec<TensorMeta>,
    pub blob_file: String,
}

pub struct StoreWriter {
    header: serde_json::Value,
    tensors: Vec<TensorMeta>,
    data: Vec<f64>,
}

impl StoreWriter {
    pub fn new(header: serde_json::Value) -> Self {
        Self { header, tensors: Vec::new(), data: Vec::new() }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], complex: bool, values: &[f64]) {
        let logical: usize = shape.iter().product();
        let expected = if complex { 2 * logical } else { logical };
        assert_eq!(values.len(), expected, "tensor {name} length mismatch");
        self.tensors.push(TensorMeta {
            name: name.to_string(),
            shape: shape.to_vec(),
            complex,
            offset: self.data.len() as u64,
            len: values.len() as u64,
        });
        self.data.extend_from_slice(values);
    }

    /// Writes `<stem>.json` and `<stem>.bin`.
    pub fn save(self, stem: &Path) -> Result<()> {
        let json_path = stem.with_extension("json");
        let bin_path = stem.with_extension("bin");
        let blob_file = bin_path
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Input(format!("bad store path {}", stem.display())))?
            .to_string();
        let manifest = Manifest { header: self.header, tensors: self.tensors, blob_file };
        let mut w = BufWriter::new(fs::File::create(&bin_path)?);
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(&json_path, text)?;
        Ok(())
    }
}

pub struct Store {
    pub manifest: Manifest,
    data: Vec<f64>,
}

impl Store {
    /// Loads a store from `<stem>.json` + its blob file.
    pub fn load(stem: &Path) -> Result<Self> {
        let json_path = stem.with_extension("json");
        let text = fs::read_to_string(&json_path)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        let bin_path = json_path
            .parent()
            .map(|p| p.join(&manifest.blob_file))
            .ok_or_else(|| Error::Input("store path has no parent".into()))?;
        let mut raw = Vec::new();
        fs::File::open(&bin_path)?.read_to_end(&mut raw)?;
        if raw.len() % 8 != 0 {
            return Err(Error::Serde(format!("blob {} not a multiple of 8 bytes", bin_path.display())));
        }
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { manifest, data })
    }

    pub fn get(&self, name: &str) -> Result<(&TensorMeta, &[f64])> {
        let meta = self
            .manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Lookup(format!("tensor {name} not in store")))?;
        let lo = meta.offset as usize;
        let hi = lo + meta.len as usize;
        if hi > self.data.len() {
            return Err(Error::Serde(format!("tensor {name} overruns blob")));
        }
        Ok((meta, &self.data[lo..hi]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = std::env::temp_dir().join(format!("tstore-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("t");
        let mut w = StoreWriter::new(serde_json::json!({"kind": "test", "n": 3}));
        w.push("a", &[2, 2], false, &[1.0, 2.0, 3.0, 4.0]);
        w.push("c", &[2], true, &[0.5, -0.5, 1.5, 2.5]);
        w.save(&stem).unwrap();

        let s = Store::load(&stem).unwrap();
        assert_eq!(s.manifest.header["n"], 3);
        let (meta, vals) = s.get("c").unwrap();
        assert!(meta.complex);
        assert_eq!(meta.shape, vec![2]);
        assert_eq!(vals, &[0.5, -0.5, 1.5, 2.5]);
        assert!(s.get("missing").is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
