use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Lower-triangular `L` with `L·Lᵀ = a`. Fails unless `a` is symmetric
/// positive definite.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape("cholesky needs a square matrix".into()));
    }
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::InvalidArgument(format!("covariance not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "covariance not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// `n_per_class` draws from each `N(means[k], covariances[k])`, class by
/// class, as `mean + L·z` with `z` standard normal.
pub fn gaussian_mixture(
    means: &[Vec<f64>],
    covariances: &[Matrix],
    n_per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    if means.is_empty() || means.len() != covariances.len() {
        return Err(Error::InvalidArgument("need one covariance per class mean".into()));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    let dim = means[0].len();
    if dim == 0 || means.iter().any(|m| m.len() != dim) || covariances.iter().any(|c| c.shape() != (dim, dim)) {
        return Err(Error::Shape("means and covariances disagree on dimension".into()));
    }
    let factors = covariances.iter().map(cholesky).collect::<Result<Vec<_>>>()?;

    let k = means.len();
    let mut rng = SeededRng::new(seed);
    let mut data = Vec::with_capacity(k * n_per_class * dim);
    let mut labels = Vec::with_capacity(k * n_per_class);
    let mut z = vec![0.0; dim];
    for (class, (mean, l)) in means.iter().zip(&factors).enumerate() {
        for _ in 0..n_per_class {
            for v in z.iter_mut() {
                *v = rng.normal();
            }
            for i in 0..dim {
                let mut x = mean[i];
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    x += l[(i, j)] * zj;
                }
                data.push(x);
            }
            labels.push(class);
        }
    }
    let features = Matrix::from_vec(k * n_per_class, dim, data)?;
    Dataset::new(
        features,
        labels,
        k,
        Provenance::new(format!("gaussian mixture: {k} classes, {n_per_class} per class, seed {seed}")),
    )
}

/// Versioned mixture description loaded from a preset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPreset {
    pub name: String,
    pub version: u32,
    #[serde(default)]
    pub note: String,
    pub means: Vec<Vec<f64>>,
    /// Row-major covariance per class.
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub n_per_class: usize,
}

impl GaussianPreset {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        let covs = self
            .covariances
            .iter()
            .map(|c| Matrix::from_rows(c))
            .collect::<Result<Vec<_>>>()?;
        let mut ds = gaussian_mixture(&self.means, &covs, self.n_per_class, seed)?;
        ds.provenance = Provenance::new(format!(
            "preset {} v{} (constructed parameters), seed {seed}",
            self.name, self.version
        ));
        Ok(ds)
    }
}
