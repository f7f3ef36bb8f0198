//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha20 keyed by a 64-bit seed,
//! with independent purposes separated by the ChaCha stream id. Changing
//! anything here changes every generated artifact, so [`PRNG_ID`] is written
//! into persisted metadata.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, DenseMatrix};

/// Identifier of the generator and seeding scheme.
pub const PRNG_ID: &str = "chacha20-stream-v1";

/// Stream ids used across the crate.
pub mod streams {
    pub const SKETCH_SIGNS: u64 = 1;
    pub const SKETCH_INDICES: u64 = 2;
    pub const LANCZOS_START: u64 = 3;
    pub const POWER_START: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
    pub const SGD_SHUFFLE: u64 = 6;
    pub const DATA: u64 = 7;
    pub const SUBSAMPLE: u64 = 8;
    pub const EXPERIMENT: u64 = 9;
}

pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_gaussian<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = gaussian(rng);
    }
}

/// Fills `out` with a point drawn uniformly from the unit sphere.
pub fn fill_unit_sphere<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        fill_gaussian(rng, out);
        let n = linalg::norm2(out);
        if n > 0.0 {
            linalg::scale(out, 1.0 / n);
            return;
        }
    }
}

pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; p];
    fill_unit_sphere(rng, &mut v);
    v
}

/// Haar-distributed `p x k` column-orthonormal matrix (QR of a Gaussian draw).
pub fn orthonormal<R: Rng + ?Sized>(rng: &mut R, p: usize, k: usize) -> DenseMatrix {
    assert!(k <= p, "cannot draw {k} orthonormal columns in dimension {p}");
    loop {
        let mut a = DenseMatrix::zeros(p, k);
        fill_gaussian(rng, a.data_mut());
        if let Ok((q, _)) = linalg::qr_orthonormalize(a) {
            return q;
        }
    }
}
