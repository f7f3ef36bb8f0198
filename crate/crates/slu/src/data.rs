//! Resolves the configured data source into train / ID test / OoD test splits.

use std::path::Path;

use slu_core::data::{rotate_images, two_gaussian_task, Dataset, Targets};

use crate::config::{DataConfig, DataSource};
use crate::error::{Error, Result};
use crate::idx;

fn require<'a>(path: &'a Option<std::path::PathBuf>, flag: &'static str, why: &'static str) -> Result<&'a Path> {
    path.as_deref().ok_or(Error::MissingFlag { flag, why })
}

pub fn train_split(cfg: &DataConfig) -> Result<Dataset> {
    match cfg.source {
        DataSource::TwoGaussian => Ok(two_gaussian_task(cfg.dim, cfg.n, cfg.shift, cfg.seed)?.id_train),
        DataSource::Idx => {
            let images = require(&cfg.train_images, "--train-images", "idx data needs training images")?;
            idx::load_idx(images, cfg.train_labels.as_deref(), "train")
        }
    }
}

/// The ID test split alone, when one is configured.
pub fn id_test_split(cfg: &DataConfig) -> Result<Option<Dataset>> {
    match cfg.source {
        DataSource::TwoGaussian => Ok(Some(two_gaussian_task(cfg.dim, cfg.n, cfg.shift, cfg.seed)?.id_test)),
        DataSource::Idx => match &cfg.test_images {
            Some(images) => Ok(Some(idx::load_idx(images, cfg.test_labels.as_deref(), "id_test")?)),
            None => Ok(None),
        },
    }
}

/// `(id_test, ood_test)`.
pub fn test_splits(cfg: &DataConfig) -> Result<(Dataset, Dataset)> {
    match cfg.source {
        DataSource::TwoGaussian => {
            let task = two_gaussian_task(cfg.dim, cfg.n, cfg.shift, cfg.seed)?;
            Ok((task.id_test, task.ood_test))
        }
        DataSource::Idx => {
            let images = require(&cfg.test_images, "--test-images", "idx data needs test images")?;
            let id = idx::load_idx(images, cfg.test_labels.as_deref(), "id_test")?;
            let ood = match (&cfg.ood_images, cfg.ood_rotate_degrees) {
                (Some(p), _) => idx::load_idx(p, cfg.ood_labels.as_deref(), "ood_test")?,
                (None, Some(deg)) => {
                    let side = square_side(id.dim()).ok_or_else(|| {
                        Error::Config(format!("--ood-rotate needs square images, got d = {}", id.dim()))
                    })?;
                    let mut r = rotate_images(&id, deg, side)?;
                    r.name = "ood_test".into();
                    r
                }
                (None, None) => {
                    return Err(Error::MissingFlag {
                        flag: "--ood-images",
                        why: "idx data needs OoD images or --ood-rotate",
                    })
                }
            };
            Ok((id, ood))
        }
    }
}

fn square_side(d: usize) -> Option<usize> {
    let s = (d as f64).sqrt().round() as usize;
    (s * s == d).then_some(s)
}

/// Largest class index plus one.
pub fn class_count(ds: &Dataset) -> Option<usize> {
    match ds.targets() {
        Targets::Classes(c) => c.iter().max().map(|m| m + 1),
        _ => None,
    }
}

/// The first `limit` points of `ds`.
pub fn truncate(ds: Dataset, limit: Option<usize>) -> Result<Dataset> {
    match limit {
        Some(m) if m < ds.len() => {
            let idx: Vec<usize> = (0..m).collect();
            let name = ds.name.clone();
            Ok(ds.select(&idx, name)?)
        }
        _ => Ok(ds),
    }
}
