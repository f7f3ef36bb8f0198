//! MLPC model checkpoints.
//!
//! Little-endian layout: magic `b"MLPC"`, `u32` version, `u32` activation
//! id, `u32` number of layer widths, the widths as `u32`, then the flat
//! parameter vector as `f32`. Parameters are promoted to `f64` on load.

use std::fs;
use std::path::Path;

use slu_core::model::{param_count, Activation, MlpModel};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MLPC";
pub const VERSION: u32 = 1;

pub fn encode(model: &MlpModel) -> Vec<u8> {
    let dims = model.layer_dims();
    let mut out = Vec::with_capacity(16 + 4 * dims.len() + 4 * model.num_params());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::from(model.activation().id()).to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &w in model.params() {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::TruncatedFile {
            path: self.path.into(),
            needed: self.at.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

/// `path` is used only in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<MlpModel> {
    let mut r = Reader { bytes, at: 0, path };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: u32::from_be_bytes(MAGIC),
            found: u32::from_be_bytes(magic.try_into().expect("four bytes")),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let act_id = r.u32()?;
    let activation = u8::try_from(act_id)
        .ok()
        .and_then(Activation::from_id)
        .ok_or_else(|| Error::format(path, format!("unknown activation id {act_id}")))?;
    let n_dims = r.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(Error::format(path, format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let p = param_count(&dims);
    let payload = r.take(p.checked_mul(4).ok_or_else(|| Error::format(path, "parameter count overflows"))?)?;
    if r.at != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - r.at)));
    }
    let params =
        payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("four bytes")))).collect();
    Ok(MlpModel::from_params(&dims, activation, params)?)
}

pub fn write(path: &Path, model: &MlpModel) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<MlpModel> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?, path)
}

/// The model as it will be after a write/read cycle.
pub fn round_to_stored(model: &MlpModel) -> MlpModel {
    let params = model.params().iter().map(|&w| f64::from(w as f32)).collect();
    MlpModel::from_params(model.layer_dims(), model.activation(), params).expect("same shape")
}
