//! Memory-efficient spectral sketching for matrix-free symmetric operators.
//!
//! The crate builds sketched low-rank eigenbases with Sketched Lanczos
//! (low-memory Lanczos whose iterates are compressed on the fly by a
//! subsampled randomized Hadamard transform) and uses them to score the
//! predictive uncertainty of small neural networks.
//!
//! Everything here is `no_std` + `alloc`: file formats, the command line and
//! timing live in the companion `slu` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod lanczos;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod score;
pub mod sketch;
pub mod sketched_lanczos;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, LinearOperator, Spectrum, TridiagonalMatrix};
pub use sketch::SketchOperator;
pub use sketched_lanczos::SketchedBasis;
