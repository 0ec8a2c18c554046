//! Datasets, batching, and domain bookkeeping: a synthetic 4-domain shift,
//! a corruption suite, a directory loader, and deterministic batchers.

pub mod batch;
pub mod corrupt;
pub mod loader;
pub mod synthetic;

pub use batch::{batch_from, epoch_batches, paired_epoch};
pub use corrupt::{corrupt, Corruption, ALL_CORRUPTIONS};
pub use loader::load_directory;
pub use synthetic::generate_synthetic;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{stream_rng, Stream};
use rand::Rng;

/// Where a sample came from: one of the source domains, or the target domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Source(usize),
    Target,
}

/// A batch of images with optional labels and per-sample domain tags.
///
/// Target-domain samples carry `None` labels: adaptation is unsupervised, and
/// stripping the labels structurally (rather than by convention) means no
/// loss can read them even by accident.
#[derive(Debug, Clone)]
pub struct ImageBatch {
    pub images: Vec<Image>,
    pub labels: Vec<Option<usize>>,
    pub domains: Vec<DomainTag>,
}

impl ImageBatch {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Every source sample must be labeled; target samples must not be.
    pub fn check_invariants(&self) -> Result<()> {
        if self.images.len() != self.labels.len() || self.images.len() != self.domains.len() {
            return Err(Error::Data(format!(
                "batch fields disagree: {} images, {} labels, {} tags",
                self.images.len(),
                self.labels.len(),
                self.domains.len()
            )));
        }
        for (i, (l, d)) in self.labels.iter().zip(&self.domains).enumerate() {
            match (l, d) {
                (None, DomainTag::Source(s)) => {
                    return Err(Error::Data(format!("source sample {i} (domain {s}) lacks a label")))
                }
                (Some(_), DomainTag::Target) => {
                    return Err(Error::Data(format!("target sample {i} exposes a label")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// A labeled, single-domain dataset. Ground-truth labels are always present
/// here — even for the target domain — because evaluation needs them; the
/// batcher strips them when building target training batches.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub domain: String,
    pub num_classes: usize,
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Stratified split into (train, holdout): `holdout_fraction` of every
    /// class (rounded down, at least 1 when the class is nonempty and the
    /// fraction is positive) goes to the holdout.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let mut rng = stream_rng(seed, Stream::Shuffle, 0xBEEF);
        let mut train_idx = Vec::new();
        let mut hold_idx = Vec::new();
        for idxs in by_class.iter_mut() {
            for i in (1..idxs.len()).rev() {
                let j = rng.gen_range(0..=i);
                idxs.swap(i, j);
            }
            let mut n_hold = (idxs.len() as f64 * holdout_fraction).floor() as usize;
            if holdout_fraction > 0.0 && n_hold == 0 && !idxs.is_empty() {
                n_hold = 1;
            }
            hold_idx.extend_from_slice(&idxs[..n_hold]);
            train_idx.extend_from_slice(&idxs[n_hold..]);
        }
        train_idx.sort_unstable();
        hold_idx.sort_unstable();
        let pick = |idxs: &[usize]| Dataset {
            domain: self.domain.clone(),
            num_classes: self.num_classes,
            images: idxs.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idxs.iter().map(|&i| self.labels[i]).collect(),
        };
        (pick(&train_idx), pick(&hold_idx))
    }
}

/// What to load or generate.
#[derive(Debug, Clone)]
pub enum DataKind {
    /// Rendered glyph shapes across four styled domains.
    Synthetic { samples_per_class: usize },
    /// `root/<domain>/<class>/<image>` layout on disk.
    Directory { root: std::path::PathBuf },
}

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub kind: DataKind,
    pub num_classes: usize,
    pub channels: usize,
    /// Square image extent.
    pub size: usize,
    /// Per-domain fraction held out for evaluation.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Data(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Data(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.size < 4 || self.size % 4 != 0 {
            return Err(Error::Data(format!(
                "image size must be a multiple of 4 and ≥ 4 (two pooling stages), got {}",
                self.size
            )));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Data(format!(
                "holdout fraction must lie in [0,1), got {}",
                self.holdout_fraction
            )));
        }
        if let DataKind::Synthetic { samples_per_class } = self.kind {
            if samples_per_class < 40 {
                return Err(Error::Data(format!(
                    "synthetic generation needs ≥ 40 samples per class per domain, got {samples_per_class}"
                )));
            }
        }
        Ok(())
    }

    /// Materialize the per-domain datasets.
    pub fn load(&self) -> Result<Vec<Dataset>> {
        self.validate()?;
        match &self.kind {
            DataKind::Synthetic { .. } => generate_synthetic(self),
            DataKind::Directory { root } => load_directory(root, self.channels, self.size),
        }
    }
}
