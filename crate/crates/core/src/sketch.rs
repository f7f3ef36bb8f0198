//! Subsampled randomized Hadamard (or Fourier) sketch `S ∈ R^{s×p}`.
//!
//! `S v = sqrt(p_pad / s) · P · H · D · pad(v)` where `pad` zero-extends to the
//! next power of two, `D` is a Rademacher sign diagonal, `H` the orthonormal
//! Walsh–Hadamard transform and `P` keeps `s` coordinates sampled without
//! replacement. With this scaling `E‖Sv‖² = ‖v‖²`.
//!
//! Only `(p, s, seed, transform)` identify an operator; signs and sample
//! indices are regenerated from the seed. Signs are stored as bytes and
//! indices as `u32`, so the resident footprint stays well under `p + s`
//! floats.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng;

pub const WHT_TRANSFORM_ID: &str = "wht-orthonormal-v1";
pub const DFT_TRANSFORM_ID: &str = "dft-orthonormal-v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// Real orthonormal Walsh–Hadamard transform (SRHT). Output length `s`.
    #[default]
    Hadamard,
    /// Orthonormal discrete Fourier transform (SRFT). Each sampled complex
    /// coordinate is stored as a `(re, im)` pair, so output length is `2s`.
    Fourier,
}

impl Transform {
    pub fn id(self) -> &'static str {
        match self {
            Transform::Hadamard => WHT_TRANSFORM_ID,
            Transform::Fourier => DFT_TRANSFORM_ID,
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            WHT_TRANSFORM_ID => Some(Transform::Hadamard),
            DFT_TRANSFORM_ID => Some(Transform::Fourier),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchOperator {
    p: usize,
    p_pad: usize,
    s: usize,
    seed: u64,
    transform: Transform,
    signs: Vec<i8>,
    indices: Vec<u32>,
    scale: f64,
}

impl SketchOperator {
    /// Hadamard sketch from `R^p` to `R^s`.
    pub fn new(p: usize, s: usize, seed: u64) -> Result<Self> {
        Self::with_transform(p, s, seed, Transform::Hadamard)
    }

    pub fn with_transform(p: usize, s: usize, seed: u64, transform: Transform) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDimensions("ambient dimension must be positive".into()));
        }
        let p_pad = p.next_power_of_two();
        if s == 0 || s > p_pad {
            return Err(Error::InvalidDimensions(format!("sketch size {s} must lie in 1..={p_pad} for p = {p}")));
        }
        if p_pad > u32::MAX as usize {
            return Err(Error::InvalidDimensions(format!("p = {p} is too large")));
        }
        let mut g = rng::stream(seed, rng::streams::SKETCH_SIGNS);
        let signs = (0..p_pad).map(|_| if g.random_bool(0.5) { 1i8 } else { -1i8 }).collect();

        // Partial Fisher–Yates over the padded coordinates.
        let mut g = rng::stream(seed, rng::streams::SKETCH_INDICES);
        let mut perm: Vec<u32> = (0..p_pad as u32).collect();
        for i in 0..s {
            let j = g.random_range(i as u32..p_pad as u32) as usize;
            perm.swap(i, j);
        }
        perm.truncate(s);
        perm.shrink_to_fit();
        perm.sort_unstable();

        Ok(Self { p, p_pad, s, seed, transform, signs, indices: perm, scale: libm::sqrt(p_pad as f64 / s as f64) })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn p_pad(&self) -> usize {
        self.p_pad
    }

    /// Number of sampled coordinates.
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sample_indices(&self) -> &[u32] {
        &self.indices
    }

    /// Length of a sketched vector.
    pub fn output_dim(&self) -> usize {
        match self.transform {
            Transform::Hadamard => self.s,
            Transform::Fourier => 2 * self.s,
        }
    }

    /// Length of the scratch buffer [`apply_into`](Self::apply_into) needs.
    pub fn scratch_len(&self) -> usize {
        match self.transform {
            Transform::Hadamard => self.p_pad,
            Transform::Fourier => 2 * self.p_pad,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.p, v.len())?;
        let mut scratch = alloc::vec![0.0; self.scratch_len()];
        let mut out = alloc::vec![0.0; self.output_dim()];
        self.apply_into(v, &mut scratch, &mut out);
        Ok(out)
    }

    /// Allocation-free application. `v` has length `p`, `scratch` at least
    /// [`scratch_len`](Self::scratch_len), `out` exactly
    /// [`output_dim`](Self::output_dim).
    pub fn apply_into(&self, v: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.p, "sketch input length");
        assert_eq!(out.len(), self.output_dim(), "sketch output length");
        match self.transform {
            Transform::Hadamard => {
                let buf = &mut scratch[..self.p_pad];
                self.signed_pad(v, buf);
                fwht(buf);
                let f = self.scale / libm::sqrt(self.p_pad as f64);
                for (o, &i) in out.iter_mut().zip(&self.indices) {
                    *o = f * buf[i as usize];
                }
            }
            Transform::Fourier => {
                let buf = &mut scratch[..2 * self.p_pad];
                buf.fill(0.0);
                for (i, (&x, &sg)) in v.iter().zip(&self.signs).enumerate() {
                    buf[2 * i] = f64::from(sg) * x;
                }
                fft_in_place(buf);
                let f = self.scale / libm::sqrt(self.p_pad as f64);
                for (o, &i) in out.chunks_exact_mut(2).zip(&self.indices) {
                    o[0] = f * buf[2 * i as usize];
                    o[1] = f * buf[2 * i as usize + 1];
                }
            }
        }
    }

    /// `H D pad(v)` before subsampling; an isometry.
    pub fn rotate(&self, v: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.p, v.len())?;
        let mut buf = alloc::vec![0.0; self.p_pad];
        self.signed_pad(v, &mut buf);
        fwht(&mut buf);
        let f = 1.0 / libm::sqrt(self.p_pad as f64);
        buf.iter_mut().for_each(|x| *x *= f);
        Ok(buf)
    }

    /// Sketches every column of a `p x m` matrix.
    pub fn apply_columns(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        Error::check_len(self.p, a.rows())?;
        let mut out = DenseMatrix::zeros(self.output_dim(), a.cols());
        let mut scratch = alloc::vec![0.0; self.scratch_len()];
        for j in 0..a.cols() {
            self.apply_into(a.col(j), &mut scratch, out.col_mut(j));
        }
        Ok(out)
    }

    fn signed_pad(&self, v: &[f64], buf: &mut [f64]) {
        for ((b, &x), &sg) in buf.iter_mut().zip(v).zip(&self.signs) {
            *b = f64::from(sg) * x;
        }
        buf[self.p..].fill(0.0);
    }
}

/// Unnormalized in-place fast Walsh–Hadamard transform; length must be a
/// power of two.
pub fn fwht(x: &mut [f64]) {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
}

/// Unnormalized in-place radix-2 DFT on interleaved `(re, im)` pairs.
fn fft_in_place(buf: &mut [f64]) {
    let n = buf.len() / 2;
    debug_assert!(n.is_power_of_two());
    // bit reversal
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(2 * i, 2 * j);
            buf.swap(2 * i + 1, 2 * j + 1);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * core::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let (ws, wc) = libm::sincos(ang * k as f64);
                let a = start + k;
                let b = a + len / 2;
                let (br, bi) = (buf[2 * b], buf[2 * b + 1]);
                let tr = wc * br - ws * bi;
                let ti = wc * bi + ws * br;
                let (ar, ai) = (buf[2 * a], buf[2 * a + 1]);
                buf[2 * a] = ar + tr;
                buf[2 * a + 1] = ai + ti;
                buf[2 * b] = ar - tr;
                buf[2 * b + 1] = ai - ti;
            }
        }
        len <<= 1;
    }
}
