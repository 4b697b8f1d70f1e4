//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "DSLF" | u32 version = 1
//! u32 spec length | UTF-8 model spec text
//! u32 parameter count
//!   per parameter: u16 name length | name | u8 rank | u32 dims… | f32 data…
//! u32 metadata length | UTF-8 `key=value` lines
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::error::TensorError;
use crate::model::{Model, ModelSpec};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"DSLF";
pub const VERSION: u32 = 1;

/// Free-form training metadata stored with a checkpoint.
pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint integrity error: {0}")]
    Integrity(String),
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_checkpoint<T: Scalar>(model: &Model<T>, metadata: &Metadata) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let spec = model.spec().to_string();
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(spec.as_bytes());
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.value.rank() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    let mut meta = String::new();
    for (k, v) in metadata {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(CheckpointError::Metadata(format!("entry '{k}' cannot be stored as key=value")));
        }
        meta.push_str(&format!("{k}={v}\n"));
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, metadata: &Metadata, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(model, metadata)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn text(&mut self, n: usize, what: &'static str) -> Result<&'a str, CheckpointError> {
        std::str::from_utf8(self.take(n, what)?)
            .map_err(|_| CheckpointError::Integrity(format!("{what} is not UTF-8")))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(Model<T>, Metadata), CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let spec_len = r.u32("spec length")? as usize;
    let spec: ModelSpec = r
        .text(spec_len, "model spec")?
        .parse()
        .map_err(|e: TensorError| CheckpointError::Integrity(format!("model spec: {e}")))?;
    let count = r.u32("parameter count")? as usize;
    let mut named = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u16("parameter name length")? as usize;
        let name = r.text(name_len, "parameter name")?.to_string();
        let rank = r.u8("parameter rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u32("parameter dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| CheckpointError::Integrity(format!("{name}: shape overflows")))?;
        let raw = r.take(n.checked_mul(4).ok_or(CheckpointError::Truncated("parameter data"))?, "parameter data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| CheckpointError::Integrity(format!("{name}: {e}")))?;
        named.push((name, value));
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_text = r.text(meta_len, "metadata")?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Integrity(format!(
            "{} trailing bytes after metadata",
            bytes.len() - r.pos
        )));
    }
    let mut metadata = Metadata::new();
    for line in meta_text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CheckpointError::Metadata(format!("line '{line}' is not key=value")))?;
        metadata.insert(k.to_string(), v.to_string());
    }
    let model = Model::from_params(spec, named).map_err(|e| CheckpointError::Integrity(e.to_string()))?;
    Ok((model, metadata))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Model<T>, Metadata), CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
