//! Versioned binary container for model checkpoints and other artifacts.
//!
//! One format serves every artifact in the pipeline (policy/value nets,
//! CVAE ensembles, dynamics-ensemble baselines, calibration sets): a JSON
//! metadata block followed by named f64 arrays. Round-trips are lossless —
//! floats are stored as raw IEEE-754 bits.
//!
//! # Byte layout (version 1)
//!
//! All integers little-endian, all floats IEEE-754 binary64 little-endian.
//!
//! ```text
//! offset  size        field
//! 0       8           magic: ASCII "COTDBIN1"
//! 8       4           format version: u32 = 1
//! 12      4           reserved: u32 = 0
//! 16      8           meta_len: u64
//! 24      meta_len    metadata: UTF-8 JSON (kind, config echo, dims, ...)
//! .       8           n_arrays: u64
//! then, per array, in file order:
//!         8           name_len: u64
//!         name_len    name: UTF-8
//!         8           ndim: u64
//!         8 * ndim    dims: u64 each, row-major order
//!         8 * prod    data: f64 little-endian
//! ```
//!
//! Writers emit metadata with JSON keys in sorted order and arrays in
//! insertion order, so identical contents produce identical bytes — the
//! artifact checksums in the pipeline manifest rely on this.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Activation, Linear, Mlp, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"COTDBIN1";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Container {
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Container {
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.arrays.push((name.into(), tensor));
    }

    pub fn array(&self, name: &str) -> Result<&Tensor> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("missing array `{name}`")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let meta =
            serde_json::to_vec(&self.meta).map_err(|e| Error::Serde(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.arrays.len() as u64).to_le_bytes())?;
        for (name, tensor) in &self.arrays {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u64).to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&(tensor.shape().len() as u64).to_le_bytes())?;
            for &d in tensor.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic; not a COTD container".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let _reserved = read_u32(r)?;
        let meta_len = read_u64(r)? as usize;
        let mut meta_buf = vec![0u8; meta_len];
        r.read_exact(&mut meta_buf)?;
        let meta =
            serde_json::from_slice(&meta_buf).map_err(|e| Error::Serde(e.to_string()))?;
        let n_arrays = read_u64(r)? as usize;
        let mut arrays = Vec::with_capacity(n_arrays);
        for _ in 0..n_arrays {
            let name_len = read_u64(r)? as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let ndim = read_u64(r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(r)? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = vec![0.0f64; numel];
            let mut b = [0u8; 8];
            for v in data.iter_mut() {
                r.read_exact(&mut b)?;
                *v = f64::from_le_bytes(b);
            }
            arrays.push((name, Tensor::new(shape, data)?));
        }
        Ok(Container { meta, arrays })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        Container::read_from(&mut cursor)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Container::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized container; the provenance checksum
    /// every downstream stage verifies.
    pub fn sha256_hex(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Write via a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "artifact".into())
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Append an MLP's parameters as `{prefix}/layer{i}/weight` and `/bias`.
pub fn mlp_to_arrays(prefix: &str, mlp: &Mlp, out: &mut Vec<(String, Tensor)>) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        out.push((format!("{prefix}/layer{i}/weight"), layer.weight.clone()));
        out.push((format!("{prefix}/layer{i}/bias"), layer.bias.clone()));
    }
}

/// Rebuild an MLP from container arrays written by [`mlp_to_arrays`].
pub fn mlp_from_arrays(
    prefix: &str,
    activations: &[Activation],
    container: &Container,
) -> Result<Mlp> {
    let mut layers = Vec::new();
    for i in 0..activations.len() {
        let weight = container.array(&format!("{prefix}/layer{i}/weight"))?.clone();
        let bias = container.array(&format!("{prefix}/layer{i}/bias"))?.clone();
        layers.push(Linear { weight, bias });
    }
    let mlp = Mlp {
        layers,
        activations: activations.to_vec(),
    };
    mlp.validate()?;
    Ok(mlp)
}
