//! Datasets, synthetic generation, splitting and file formats.

mod io;
pub(crate) mod split;
mod synth;

pub use io::{load_csv, load_idx, read_idx, save_csv, save_idx, IdxArray};
pub use split::{split, SplitSpec, Splits};
pub use synth::{cholesky, gaussian_mixture, GaussianPreset};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub description: String,
}

impl Provenance {
    pub fn new(description: impl Into<String>) -> Self {
        Provenance { description: description.into() }
    }
}

/// Labeled samples, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize, provenance: Provenance) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidLabel { label, num_classes });
        }
        features.check_finite()?;
        Ok(Dataset { features, labels, num_classes, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Rows `idx` as a new dataset, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        }
    }

    /// Network input layout: `dim × |idx|`, one column per sample.
    pub fn columns(&self, idx: &[usize]) -> Matrix {
        self.features.select_rows(idx).transpose()
    }

    pub fn all_columns(&self) -> Matrix {
        self.features.transpose()
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn of_class(&self, class: usize) -> Dataset {
        self.subset(&self.class_indices(class))
    }

    /// Samples whose label is (`keep = true`) or is not in `classes`.
    pub fn filter_classes(&self, classes: &[usize], keep: bool) -> Dataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]) == keep)
            .collect();
        self.subset(&idx)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// SHA-256 over shape, labels and the bit patterns of all features.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        for &y in &self.labels {
            h.update((y as u64).to_le_bytes());
        }
        for v in self.features.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Concatenates datasets with identical dimensions and class counts.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Empty("dataset list".into()))?;
        if parts.iter().any(|d| d.dim() != first.dim() || d.num_classes != first.num_classes) {
            return Err(Error::Shape("datasets differ in dimension or class count".into()));
        }
        let rows: Vec<f64> = parts.iter().flat_map(|d| d.features.as_slice().iter().copied()).collect();
        let n: usize = parts.iter().map(|d| d.len()).sum();
        let labels = parts.iter().flat_map(|d| d.labels.iter().copied()).collect();
        Ok(Dataset {
            features: Matrix::from_vec(n, first.dim(), rows)?,
            labels,
            num_classes: first.num_classes,
            provenance: first.provenance.clone(),
        })
    }
}
