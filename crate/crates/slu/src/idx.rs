//! IDX binary tensors (the MNIST distribution format).
//!
//! Layout: big-endian `u32` magic `0x0000_08NN` (unsigned bytes, rank `NN`),
//! `NN` big-endian `u32` dimension sizes, then the raw bytes in row-major
//! order.

use std::fs;
use std::path::Path;

use slu_core::data::{Dataset, Targets};
use slu_core::DenseMatrix;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Rank-3 byte tensor: `count` images of `rows x cols` pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }
}

fn read_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    match bytes.get(at..at + 4) {
        Some(b) => Ok(u32::from_be_bytes(b.try_into().expect("four bytes"))),
        None => Err(Error::TruncatedFile { path: path.into(), needed: at + 4, available: bytes.len() }),
    }
}

fn header(bytes: &[u8], magic: u32, path: &Path) -> Result<Vec<usize>> {
    let found = read_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::BadMagic { path: path.into(), expected: magic, found });
    }
    let rank = (magic & 0xff) as usize;
    (0..rank).map(|i| read_u32(bytes, 4 + 4 * i, path).map(|d| d as usize)).collect()
}

fn payload<'a>(bytes: &'a [u8], rank: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let start = 4 + 4 * rank;
    let needed = start.checked_add(len).ok_or_else(|| Error::format(path, "dimension sizes overflow"))?;
    if bytes.len() < needed {
        return Err(Error::TruncatedFile { path: path.into(), needed, available: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - needed)));
    }
    Ok(&bytes[start..])
}

/// `path` is used only in error messages.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let dims = header(bytes, IMAGES_MAGIC, path)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let len = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| Error::format(path, "dimension sizes overflow"))?;
    let pixels = payload(bytes, 3, len, path)?.to_vec();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let dims = header(bytes, LABELS_MAGIC, path)?;
    Ok(payload(bytes, 1, dims[0], path)?.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_images(path: &Path) -> Result<IdxImages> {
    parse_images(&read(path)?, path)
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    parse_labels(&read(path)?, path)
}

pub fn write_images(path: &Path, images: &IdxImages) -> Result<()> {
    fs::write(path, encode_images(images)).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    fs::write(path, encode_labels(labels)).map_err(|e| Error::io(path, e))
}

/// Images as a dataset with pixels scaled to `[0, 1]`.
pub fn to_dataset(images: &IdxImages, labels: Option<&[u8]>, name: &str) -> Result<Dataset> {
    let d = images.pixel_count();
    let data = images.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let inputs = DenseMatrix::from_col_major(d, images.count, data)?;
    let targets = match labels {
        None => Targets::None,
        Some(l) => {
            if l.len() != images.count {
                return Err(slu_core::Error::DimensionMismatch { expected: images.count, got: l.len() }.into());
            }
            Targets::Classes(l.iter().map(|&c| c as usize).collect())
        }
    };
    Ok(Dataset::new(name, inputs, targets, 0)?)
}

pub fn load_idx(images: &Path, labels: Option<&Path>, name: &str) -> Result<Dataset> {
    let img = read_images(images)?;
    let lab = labels.map(read_labels).transpose()?;
    to_dataset(&img, lab.as_deref(), name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn two_by_two_images() {
        let img = IdxImages { count: 2, rows: 2, cols: 2, pixels: vec![0, 255, 51, 102, 1, 2, 3, 4] };
        let parsed = parse_images(&encode_images(&img), p()).unwrap();
        assert_eq!(parsed, img);
        let ds = to_dataset(&parsed, None, "t").unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 4));
        assert_eq!(ds.input(0), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn header_errors() {
        let mut bytes = encode_labels(&[1, 2, 3]);
        assert!(matches!(parse_images(&bytes, p()), Err(Error::BadMagic { found: LABELS_MAGIC, .. })));
        bytes.pop();
        assert!(matches!(parse_labels(&bytes, p()), Err(Error::TruncatedFile { needed: 11, available: 10, .. })));
        assert!(matches!(parse_labels(&bytes[..3], p()), Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn label_count_mismatch() {
        let img = IdxImages { count: 2, rows: 1, cols: 1, pixels: vec![0, 1] };
        let err = to_dataset(&img, Some(&[0, 1, 1]), "t").unwrap_err();
        assert!(matches!(err, Error::Core(slu_core::Error::DimensionMismatch { expected: 2, got: 3 })));
    }
}
