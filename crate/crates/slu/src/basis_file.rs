//! SKLB sketched-basis files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "SKLB" | u32 version
//! u64 p | u64 s | u64 k | u64 k0 | u64 lanczos seed
//! u64 sketch seed | str transform id | str prng id
//! u64 requested iterations | u64 breakdown (u64::MAX if none) | f64 concat defect (NaN if none)
//! u32 flags (1 = eigenvalues, 2 = preconditioner) | u64 eigenvalue count
//! f64 U_S (rows x k, column-major) | f64 eigenvalues | f64 U_0 (p x k0) | f64 Λ_0
//! ```
//!
//! Strings are a `u32` byte length followed by UTF-8. Only the sketch
//! parameters are stored; signs and sample indices are regenerated.

use std::fs;
use std::path::Path;

use slu_core::rng::PRNG_ID;
use slu_core::sketch::Transform;
use slu_core::sketched_lanczos::Preconditioner;
use slu_core::{DenseMatrix, SketchOperator, SketchedBasis};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SKLB";
pub const VERSION: u32 = 1;

const HAS_EIGENVALUES: u32 = 1;
const HAS_PRECONDITIONER: u32 = 2;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

pub fn encode(basis: &SketchedBasis) -> Vec<u8> {
    let sk = basis.sketch();
    let pc = basis.preconditioner();
    let mut w = Writer::default();
    w.0.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.u64(sk.p() as u64);
    w.u64(sk.s() as u64);
    w.u64(basis.k() as u64);
    w.u64(pc.map_or(0, |p| p.k0()) as u64);
    w.u64(basis.seed());
    w.u64(sk.seed());
    w.str(sk.transform().id());
    w.str(PRNG_ID);
    w.u64(basis.requested() as u64);
    w.u64(basis.breakdown().map_or(u64::MAX, |b| b as u64));
    w.f64s(&[basis.concat_defect().unwrap_or(f64::NAN)]);
    let flags = if basis.eigenvalues().is_some() { HAS_EIGENVALUES } else { 0 }
        | if pc.is_some() { HAS_PRECONDITIONER } else { 0 };
    w.u32(flags);
    w.u64(basis.eigenvalues().map_or(0, |e| e.len()) as u64);
    w.f64s(basis.u_s().data());
    if let Some(e) = basis.eigenvalues() {
        w.f64s(e);
    }
    if let Some(pc) = pc {
        w.f64s(pc.basis.data());
        w.f64s(&pc.eigenvalues);
    }
    w.0
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
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::format(self.path, format!("size {v} does not fit in memory")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::format(self.path, "payload size overflows"))?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format(self.path, "string field is not UTF-8"))
    }
}

/// `path` is used only in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<SketchedBasis> {
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
        return Err(Error::format(path, format!("unsupported basis file version {version}")));
    }
    let (p, s, k, k0) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let seed = r.u64()?;
    let sketch_seed = r.u64()?;
    let transform_id = r.str()?;
    let transform = Transform::from_id(&transform_id)
        .ok_or_else(|| Error::format(path, format!("unknown transform {transform_id:?}")))?;
    let prng = r.str()?;
    if prng != PRNG_ID {
        return Err(Error::format(path, format!("sketch was drawn with PRNG {prng:?}, this build uses {PRNG_ID:?}")));
    }
    let requested = r.usize()?;
    let breakdown = match r.u64()? {
        u64::MAX => None,
        b => Some(b as usize),
    };
    let defect = r.f64s(1)?[0];
    let flags = r.u32()?;
    if flags & !(HAS_EIGENVALUES | HAS_PRECONDITIONER) != 0 {
        return Err(Error::format(path, format!("unknown flags {flags:#x}")));
    }
    let n_eig = r.usize()?;

    let sketch = SketchOperator::with_transform(p, s, sketch_seed, transform)?;
    let rows = sketch.output_dim();
    let u_len = rows.checked_mul(k).ok_or_else(|| Error::format(path, "basis size overflows"))?;
    let u_s = DenseMatrix::from_col_major(rows, k, r.f64s(u_len)?)?;
    let eigenvalues = if flags & HAS_EIGENVALUES != 0 { Some(r.f64s(n_eig)?) } else { None };
    let preconditioner = if flags & HAS_PRECONDITIONER != 0 {
        let len = p.checked_mul(k0).ok_or_else(|| Error::format(path, "preconditioner size overflows"))?;
        let basis = DenseMatrix::from_col_major(p, k0, r.f64s(len)?)?;
        Some(Preconditioner { basis, eigenvalues: r.f64s(k0)? })
    } else {
        None
    };
    if r.at != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - r.at)));
    }
    let defect = if defect.is_nan() { None } else { Some(defect) };
    Ok(SketchedBasis::from_parts(u_s, sketch, seed, eigenvalues, preconditioner)?
        .with_run_info(requested, breakdown, defect))
}

pub fn write(path: &Path, basis: &SketchedBasis) -> Result<()> {
    fs::write(path, encode(basis)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<SketchedBasis> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?, path)
}
