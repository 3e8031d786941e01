//! Class-wise layer subspaces and the null-space projectors built from them.
//!
//! For each class the inputs of every layer are recorded over a batch of
//! that class and decomposed by SVD. The projector used when unlearning a
//! sample of class `c` protects all other classes: their energy-weighted
//! bases are concatenated, re-decomposed, truncated to the smallest rank
//! holding `epsilon` of the energy, and complemented (`P = I − ŜŜᵀ`).

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{null_projector, rank_cutoff, svd, Matrix};
use crate::nn::{ActivationTrace, Network};
use crate::rng::SeededRng;

pub const SUBSPACE_FORMAT_VERSION: u32 = 1;

/// Default energy threshold for every layer.
pub const DEFAULT_EPSILON: f64 = 0.99;

/// Default per-class batch used to estimate a subspace.
pub const DEFAULT_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBasis {
    /// Left singular vectors of the recorded layer inputs (orthonormal columns).
    pub basis: Matrix,
    /// Matching singular values, non-increasing.
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSubspace {
    pub class_id: usize,
    pub layers: Vec<LayerBasis>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorLayer {
    /// `I − ŜŜᵀ`, fan-in × fan-in (bias coordinate included).
    pub projector: Matrix,
    /// `Ŝ`: the retained directions.
    pub retained_basis: Matrix,
    pub rank: usize,
    pub epsilon: f64,
}

/// Projectors that keep updates away from every class except `excluded_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullProjector {
    pub excluded_class: usize,
    pub layers: Vec<ProjectorLayer>,
}

impl NullProjector {
    pub fn ranks(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.rank).collect()
    }

    /// Dimension of the null space at each layer.
    pub fn null_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.projector.rows() - l.rank).collect()
    }
}

pub fn validate_epsilons(epsilons: &[f64]) -> Result<()> {
    if let Some(e) = epsilons.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::Config(format!("energy threshold {e} outside (0, 1]")));
    }
    Ok(())
}

/// SVD of every layer's recorded inputs over a single-class batch.
/// Bases are kept in full; truncation happens when merging.
pub fn class_subspace(net: &Network, class_batch: &Dataset) -> Result<ClassSubspace> {
    if class_batch.is_empty() {
        return Err(Error::Empty("class batch".into()));
    }
    let class_id = class_batch.labels()[0];
    if class_batch.labels().iter().any(|&y| y != class_id) {
        return Err(Error::InvalidArgument("class batch mixes labels".into()));
    }
    let trace = net
        .forward(&class_batch.all_columns(), true)?
        .trace
        .expect("recording requested");
    let layers = trace
        .layers
        .iter()
        .map(|r| {
            let d = svd(r)?;
            Ok(LayerBasis { basis: d.u, singular_values: d.s })
        })
        .collect::<Result<_>>()?;
    Ok(ClassSubspace { class_id, layers, sample_count: class_batch.len() })
}

/// Draws `min(batch_size, population)` samples of `class` without replacement.
pub fn sample_class_batch(ds: &Dataset, class: usize, batch_size: usize, rng: &mut SeededRng) -> Result<Dataset> {
    let mut idx = ds.class_indices(class);
    if idx.is_empty() {
        return Err(Error::Empty(format!("no samples of class {class}")));
    }
    rng.shuffle(&mut idx);
    idx.truncate(batch_size.max(1));
    Ok(ds.subset(&idx))
}

/// One seeded batch per class of `ds`, in class order.
pub fn class_batches(ds: &Dataset, batch_size: usize, seed: u64) -> Result<Vec<Dataset>> {
    let mut rng = SeededRng::new(seed);
    (0..ds.num_classes())
        .map(|k| sample_class_batch(ds, k, batch_size, &mut rng))
        .collect()
}

/// Subspaces for every class of `ds`, each from its own seeded batch.
pub fn all_class_subspaces(net: &Network, ds: &Dataset, batch_size: usize, seed: u64) -> Result<Vec<ClassSubspace>> {
    class_batches(ds, batch_size, seed)?
        .iter()
        .map(|b| class_subspace(net, b))
        .collect()
}

/// Merges the subspaces of the protected classes and builds one projector
/// per layer.
///
/// Each class contributes `U·diag(σ)`, so the merged decomposition sees the
/// same energy spectrum as the stacked raw activations.
pub fn merge_null_projector(excluded_class: usize, subspaces: &[&ClassSubspace], epsilons: &[f64]) -> Result<NullProjector> {
    let first = subspaces
        .first()
        .ok_or_else(|| Error::Empty("no subspaces to merge".into()))?;
    let n_layers = first.layers.len();
    if epsilons.len() != n_layers {
        return Err(Error::Shape(format!("{} thresholds for {} layers", epsilons.len(), n_layers)));
    }
    validate_epsilons(epsilons)?;
    for s in subspaces {
        if s.layers.len() != n_layers
            || s.layers.iter().zip(&first.layers).any(|(a, b)| a.basis.rows() != b.basis.rows())
        {
            return Err(Error::Shape(format!(
                "subspace of class {} does not match class {}",
                s.class_id, first.class_id
            )));
        }
    }

    let mut layers = Vec::with_capacity(n_layers);
    for (l, &eps) in epsilons.iter().enumerate() {
        let weighted = subspaces
            .iter()
            .map(|s| {
                let lb = &s.layers[l];
                let keep: Vec<usize> = (0..lb.singular_values.len())
                    .filter(|&j| lb.singular_values[j] > 0.0)
                    .collect();
                let vals: Vec<f64> = keep.iter().map(|&j| lb.singular_values[j]).collect();
                lb.basis.select_columns(&keep).scale_columns(&vals)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Matrix> = weighted.iter().collect();
        let merged = Matrix::hcat(&refs)?;
        let dim = merged.rows();
        let (retained, rank) = if merged.cols() == 0 {
            (Matrix::zeros(dim, 0), 0)
        } else {
            let d = svd(&merged)?;
            let k = rank_cutoff(&d.s, eps)?;
            (d.u.leading_columns(k), k)
        };
        // a full-rank retained space leaves no null space at all
        let projector = if rank == dim { Matrix::zeros(dim, dim) } else { null_projector(&retained)? };
        layers.push(ProjectorLayer { projector, retained_basis: retained, rank, epsilon: eps });
    }
    Ok(NullProjector { excluded_class, layers })
}

/// Per layer, the fraction of trace energy inside the retained subspace:
/// `‖(I − P)·R‖² / ‖R‖²`.
pub fn retained_energy(p: &NullProjector, trace: &ActivationTrace) -> Result<Vec<f64>> {
    if p.layers.len() != trace.layers.len() {
        return Err(Error::Shape(format!(
            "projector has {} layers, trace has {}",
            p.layers.len(),
            trace.layers.len()
        )));
    }
    p.layers
        .iter()
        .zip(&trace.layers)
        .map(|(pl, r)| {
            let inside = r.sub(&pl.projector.matmul(r)?)?;
            let total = r.frobenius_norm_sq();
            Ok(if total == 0.0 { 0.0 } else { inside.frobenius_norm_sq() / total })
        })
        .collect()
}

/// Lazily built projectors, one per excluded class, sharing the class subspaces.
#[derive(Debug)]
pub struct ProjectorCache {
    subspaces: Vec<ClassSubspace>,
    epsilons: Vec<f64>,
    cells: Vec<OnceLock<NullProjector>>,
}

impl ProjectorCache {
    /// `subspaces[k]` must describe class `k`.
    pub fn new(subspaces: Vec<ClassSubspace>, epsilons: Vec<f64>) -> Result<Self> {
        if subspaces.len() < 2 {
            return Err(Error::InvalidArgument("need subspaces for at least two classes".into()));
        }
        if let Some((k, s)) = subspaces.iter().enumerate().find(|(k, s)| s.class_id != *k) {
            return Err(Error::InvalidArgument(format!("subspace at position {k} is for class {}", s.class_id)));
        }
        validate_epsilons(&epsilons)?;
        let cells = (0..subspaces.len()).map(|_| OnceLock::new()).collect();
        Ok(ProjectorCache { subspaces, epsilons, cells })
    }

    pub fn num_classes(&self) -> usize {
        self.subspaces.len()
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn subspaces(&self) -> &[ClassSubspace] {
        &self.subspaces
    }

    /// Projector protecting every class other than `class`.
    pub fn get(&self, class: usize) -> Result<&NullProjector> {
        let cell = self.cells.get(class).ok_or(Error::MissingProjector(class))?;
        if let Some(p) = cell.get() {
            return Ok(p);
        }
        let others: Vec<&ClassSubspace> = self.subspaces.iter().filter(|s| s.class_id != class).collect();
        let built = merge_null_projector(class, &others, &self.epsilons)?;
        // a concurrent builder may have won; both results are identical
        let _ = cell.set(built);
        Ok(cell.get().expect("just set"))
    }
}

/// Stored class subspace, reusable without re-running the SVD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceArtifact {
    pub format_version: u32,
    pub subspace: ClassSubspace,
    pub epsilons: Vec<f64>,
    pub source_checkpoint_hash: String,
}

impl SubspaceArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let a: SubspaceArtifact = serde_json::from_str(&fs::read_to_string(path)?)?;
        if a.format_version != SUBSPACE_FORMAT_VERSION {
            return Err(Error::ArtifactMismatch(format!("subspace format {}", a.format_version)));
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gaussian_mixture, Provenance};
    use crate::linalg::orthonormality_error;
    use crate::nn::{Activation, LayerSpec};

    fn net() -> Network {
        Network::init(
            vec![LayerSpec::dense(2, 6, Activation::Relu), LayerSpec::dense(6, 3, Activation::Identity)],
            3,
            4,
        )
        .unwrap()
    }

    fn toy() -> Dataset {
        let means = vec![vec![1.0, 0.0], vec![-1.0, 0.5], vec![0.0, -1.0]];
        let covs = vec![Matrix::identity(2).scale(0.2); 3];
        gaussian_mixture(&means, &covs, 40, 2).unwrap()
    }

    #[test]
    fn identical_samples_give_rank_one() {
        let x = Matrix::from_rows(&vec![vec![0.3, -0.7]; 5]).unwrap();
        let ds = Dataset::new(x, vec![1; 5], 3, Provenance::new("rep")).unwrap();
        let s = class_subspace(&net(), &ds).unwrap();
        for lb in &s.layers {
            assert!(lb.singular_values[0] > 0.0);
            assert!(lb.singular_values[1..].iter().all(|&v| v <= 1e-8 * lb.singular_values[0]));
            assert!(orthonormality_error(&lb.basis) < 1e-10);
        }
    }

    #[test]
    fn mixed_labels_and_empty_batches_are_rejected() {
        let ds = toy();
        assert!(class_subspace(&net(), &ds).is_err());
        assert!(class_subspace(&net(), &ds.take(0)).is_err());
    }

    #[test]
    fn exact_projector_annihilates_its_build_activations() {
        let ds = toy();
        let n = net();
        let batch = ds.of_class(0);
        let s = class_subspace(&n, &batch).unwrap();
        let p = merge_null_projector(1, &[&s], &[1.0, 1.0]).unwrap();
        let trace = n.forward(&batch.all_columns(), true).unwrap().trace.unwrap();
        for (pl, r) in p.layers.iter().zip(&trace.layers) {
            let res = pl.projector.matmul(r).unwrap().frobenius_norm() / r.frobenius_norm();
            assert!(res <= 1e-8, "residual {res}");
        }
        let e = retained_energy(&p, &trace).unwrap();
        assert!(e.iter().all(|&f| f >= 1.0 - 1e-10));
    }

    #[test]
    fn duplicated_class_does_not_add_rank() {
        let ds = toy();
        let s = class_subspace(&net(), &ds.of_class(2)).unwrap();
        let single = merge_null_projector(0, &[&s], &[1.0, 1.0]).unwrap();
        let double = merge_null_projector(0, &[&s, &s], &[1.0, 1.0]).unwrap();
        assert_eq!(single.ranks(), double.ranks());
    }

    #[test]
    fn merge_rejects_shape_mismatch() {
        let ds = toy();
        let a = class_subspace(&net(), &ds.of_class(0)).unwrap();
        let mut b = a.clone();
        b.layers.pop();
        assert!(merge_null_projector(2, &[&a, &b], &[0.9, 0.9]).is_err());
        assert!(merge_null_projector(2, &[&a], &[0.9]).is_err());
        assert!(merge_null_projector(2, &[&a], &[0.0, 0.9]).is_err());
    }

    #[test]
    fn cache_builds_each_projector_once() {
        let ds = toy();
        let subs = all_class_subspaces(&net(), &ds, 16, 1).unwrap();
        let cache = ProjectorCache::new(subs, vec![0.99, 0.99]).unwrap();
        let a = cache.get(1).unwrap() as *const NullProjector;
        let b = cache.get(1).unwrap() as *const NullProjector;
        assert_eq!(a, b);
        assert_eq!(cache.get(1).unwrap().excluded_class, 1);
        assert!(matches!(cache.get(7), Err(Error::MissingProjector(7))));
    }

    #[test]
    fn artifact_round_trip() {
        let ds = toy();
        let s = class_subspace(&net(), &ds.of_class(1)).unwrap();
        let a = SubspaceArtifact {
            format_version: SUBSPACE_FORMAT_VERSION,
            subspace: s,
            epsilons: vec![0.99, 0.99],
            source_checkpoint_hash: "abc".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        a.save(&p).unwrap();
        assert_eq!(SubspaceArtifact::load(&p).unwrap(), a);
    }
}
