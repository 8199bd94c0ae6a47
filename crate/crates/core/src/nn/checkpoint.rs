//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"SRVLCKPT"
//! version u32      1
//! meta    u32 length + JSON bytes (variant, permutation, seed,
//!                                  update_count, created_unix)
//! count   u32      number of arrays
//! array   u16 name length + UTF-8 name
//!         u8  rank, then rank * u32 dims
//!         u8  dtype (0 = f32)
//!         dims-product * 4 bytes of f32 data
//! ```

use super::tensor::Tensor;
use super::ParamTree;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SRVLCKPT";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt metadata: {0}")]
    BadMeta(#[from] serde_json::Error),
    #[error("unsupported dtype tag {0}")]
    BadDtype(u8),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub variant: String,
    pub permutation: u8,
    pub seed: u64,
    pub update_count: u64,
    pub created_unix: u64,
}

pub fn save_checkpoint(
    path: &Path,
    meta: &CheckpointMeta,
    params: &impl ParamTree<f32>,
) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta_json = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);

    let names = params.names();
    let tensors = params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in names.iter().zip(tensors) {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        buf.push(DTYPE_F32);
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    // Atomic write: temp file in the same directory, then rename.
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(&buf)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a checkpoint into an existing parameter tree. Every stored array
/// must match the tree by name and shape, and vice versa.
pub fn load_checkpoint(
    path: &Path,
    params: &mut impl ParamTree<f32>,
) -> Result<CheckpointMeta, CheckpointError> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let mut cursor = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    if cursor.take(8)? != MAGIC.as_slice() {
        return Err(CheckpointError::BadMagic);
    }
    let version = cursor.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = cursor.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(cursor.take(meta_len)?)?;

    let count = cursor.u32()? as usize;
    let names = params.names();
    let tensors = params.tensors_mut();
    if count != tensors.len() {
        return Err(CheckpointError::ArchitectureMismatch(format!(
            "checkpoint has {count} arrays, architecture expects {}",
            tensors.len()
        )));
    }
    let mut by_name: std::collections::HashMap<String, &mut Tensor<f32>> =
        names.into_iter().zip(tensors).collect();

    for _ in 0..count {
        let name_len = cursor.u16()? as usize;
        let name = String::from_utf8(cursor.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::BadMagic)?;
        let rank = cursor.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cursor.u32()? as usize);
        }
        let dtype = cursor.u8()?;
        if dtype != DTYPE_F32 {
            return Err(CheckpointError::BadDtype(dtype));
        }
        let len: usize = shape.iter().product();
        let raw = cursor.take(len * 4)?;
        let tensor = by_name.remove(&name).ok_or_else(|| {
            CheckpointError::ArchitectureMismatch(format!("unexpected array {name:?}"))
        })?;
        if tensor.shape() != shape.as_slice() {
            return Err(CheckpointError::ArchitectureMismatch(format!(
                "array {name:?} has shape {:?}, architecture expects {:?}",
                shape,
                tensor.shape()
            )));
        }
        for (i, out) in tensor.data_mut().iter_mut().enumerate() {
            *out = f32::from_le_bytes([raw[i * 4], raw[i * 4 + 1], raw[i * 4 + 2], raw[i * 4 + 3]]);
        }
    }
    if let Some(name) = by_name.keys().next() {
        return Err(CheckpointError::ArchitectureMismatch(format!(
            "checkpoint is missing array {name:?}"
        )));
    }
    Ok(meta)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "truncated checkpoint",
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
