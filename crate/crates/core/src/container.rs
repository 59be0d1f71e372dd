//! Binary container shared by checkpoints and prepared datasets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   4 bytes   magic "STFC"
//! 4   u32       container version (currently 1)
//! 8   u64       manifest length M in bytes
//! 16  M bytes   manifest, UTF-8 JSON text
//! 16+M          array payload: f32 little-endian values
//! ```
//!
//! The manifest is a JSON object with three keys: `kind` (what the file
//! holds), `meta` (kind-specific metadata) and `arrays`, a list of
//! `{name, shape, offset, len}` records. `offset` and `len` count `f32`
//! elements from the start of the payload. Arrays are stored in manifest
//! order without padding.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"STFC";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ArrayRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<ArrayRecord>,
}

/// A named `f64` array as exchanged with callers; stored as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
    index: HashMap<String, usize>,
}

impl Container {
    pub fn new(kind: &str, meta: serde_json::Value, arrays: Vec<NamedArray>) -> Self {
        let index = arrays
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.clone(), i))
            .collect();
        Self {
            kind: kind.to_string(),
            meta,
            arrays,
            index,
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.index.get(name).map(|&i| &self.arrays[i])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        let mut offset = 0;
        let mut records = Vec::with_capacity(self.arrays.len());
        for a in &self.arrays {
            let len: usize = a.shape.iter().product();
            if len != a.data.len() {
                return Err(ContainerError::Format(format!(
                    "array {} has shape {:?} but {} values",
                    a.name,
                    a.shape,
                    a.data.len()
                )));
            }
            records.push(ArrayRecord {
                name: a.name.clone(),
                shape: a.shape.clone(),
                offset,
                len,
            });
            offset += len;
        }
        let manifest = serde_json::to_vec(&Manifest {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: records,
        })?;
        let mut out = Vec::with_capacity(16 + manifest.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for a in &self.arrays {
            for &v in &a.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let bad = |msg: &str| ContainerError::Format(msg.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a container file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CONTAINER_VERSION {
            return Err(ContainerError::Format(format!(
                "container version {version}, expected {CONTAINER_VERSION}"
            )));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let payload_start = 16usize
            .checked_add(mlen)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..payload_start])?;
        let payload = &bytes[payload_start..];
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for r in manifest.arrays {
            if r.shape.iter().product::<usize>() != r.len {
                return Err(ContainerError::Format(format!(
                    "array {} declares shape {:?} with {} values",
                    r.name, r.shape, r.len
                )));
            }
            let start = r.offset * 4;
            let end = start + r.len * 4;
            if end > payload.len() {
                return Err(ContainerError::Format(format!("array {} is truncated", r.name)));
            }
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            arrays.push(NamedArray {
                name: r.name,
                shape: r.shape,
                data,
            });
        }
        Ok(Self::new(&manifest.kind, manifest.meta, arrays))
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn write(&self, path: &Path) -> Result<(), ContainerError> {
        write_atomic(path, &self.to_bytes()?).map_err(|source| ContainerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ContainerError> {
        let bytes = fs::read(path).map_err(|source| ContainerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
