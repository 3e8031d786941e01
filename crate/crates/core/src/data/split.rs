use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    #[serde(default)]
    pub unlearn_classes: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.train > 0.0 && self.val > 0.0 && self.test >= 0.0) {
            return Err(Error::Config("train and val fractions must be positive, test non-negative".into()));
        }
        if ((self.train + self.val + self.test) - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split fractions must sum to 1".into()));
        }
        validate_unlearn_set(&self.unlearn_classes, num_classes, true)
    }
}

/// Checks that `classes` is a proper subset of `[0, num_classes)` without
/// duplicates.
pub(crate) fn validate_unlearn_set(classes: &[usize], num_classes: usize, allow_empty: bool) -> Result<()> {
    if !allow_empty && classes.is_empty() {
        return Err(Error::Config("unlearn class set is empty".into()));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= num_classes) {
        return Err(Error::InvalidLabel { label: c, num_classes });
    }
    let mut sorted = classes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != classes.len() {
        return Err(Error::Config("unlearn class set has duplicates".into()));
    }
    if classes.len() >= num_classes {
        return Err(Error::Config("cannot unlearn every class".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Training samples of the unlearn classes.
    pub d_u: Dataset,
    /// Training samples of every other class.
    pub d_r: Dataset,
    pub test_remaining: Dataset,
    pub test_unlearn: Dataset,
    /// Source-row indices of train/val/test, in split order.
    pub indices: [Vec<usize>; 3],
}

/// Stratified seeded split.
///
/// Each class is shuffled on its own stream position and cut into
/// `round(train·n)`, `round(val·n)` and the remainder; the three pieces are
/// then pooled and shuffled once more so that prefixes are class-balanced.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate(ds.num_classes())?;
    let mut rng = SeededRng::new(spec.seed);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for class in 0..ds.num_classes() {
        let mut idx = ds.class_indices(class);
        let n = idx.len();
        rng.shuffle(&mut idx);
        let n_train = ((spec.train * n as f64).round() as usize).min(n);
        let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
        let counts = [n_train, n_val, n - n_train - n_val];
        let wanted = [spec.train, spec.val, spec.test];
        for (which, (&count, &frac)) in counts.iter().zip(&wanted).enumerate() {
            if frac > 0.0 && count == 0 {
                let name = ["train", "val", "test"][which];
                return Err(Error::InvalidArgument(format!("class {class} has no samples in the {name} split")));
            }
        }
        parts[0].extend_from_slice(&idx[..n_train]);
        parts[1].extend_from_slice(&idx[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&idx[n_train + n_val..]);
    }
    for p in parts.iter_mut() {
        rng.shuffle(p);
    }

    let train = ds.subset(&parts[0]);
    let val = ds.subset(&parts[1]);
    let test = ds.subset(&parts[2]);
    let u = &spec.unlearn_classes;
    Ok(Splits {
        d_u: train.filter_classes(u, true),
        d_r: train.filter_classes(u, false),
        test_remaining: test.filter_classes(u, false),
        test_unlearn: test.filter_classes(u, true),
        train,
        val,
        test,
        indices: parts,
    })
}
