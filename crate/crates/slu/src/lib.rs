//! File formats, configuration and the command-line pipeline around
//! `slu-core`.

pub mod basis_file;
pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod idx;
pub mod output;

pub use error::{Error, Result};
