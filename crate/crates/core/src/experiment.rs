//! The toy pipeline: generate a Gaussian mixture, train, build projectors,
//! unlearn, and compare against the baselines.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{split, Dataset, GaussianPreset, SplitSpec, Splits};
use crate::error::{Error, Result};
use crate::eval::{mia, utility, MiaReport, UtilityReport};
use crate::nn::{fit, LayerSpec, Network, Schedule, TrainLog};
use crate::rng::{derive_seed, SeededRng};
use crate::subspace::{all_class_subspaces, class_batches, validate_epsilons, ProjectorCache};
use crate::unlearn::{retrain_oracle, run_plan, UnlearnLog, UnlearnPlan, UnlearnSchedule};

/// Bundled toy configuration.
pub const TOY_PRESET: &str = include_str!("../presets/toy.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub half_width: f64,
    pub points: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: GaussianPreset,
    pub split: Fractions,
    pub unlearn_classes: Vec<usize>,
    pub architecture: Vec<LayerSpec>,
    pub train: Schedule,
    pub unlearn: UnlearnSchedule,
    /// One value for every layer, or one per layer.
    pub epsilons: Vec<f64>,
    pub subspace_batch: usize,
    /// Per-side holdout size for membership inference.
    pub mia_holdout: usize,
    pub contour: ContourSpec,
}

impl ExperimentConfig {
    pub fn toy() -> Self {
        serde_json::from_str(TOY_PRESET).expect("bundled preset parses")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ExperimentConfig { seed, ..self.clone() }
    }

    pub fn num_classes(&self) -> usize {
        self.data.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes();
        if k < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        self.split_spec().validate(k)?;
        self.train.validate()?;
        self.plan_for(crate::unlearn::Labeling::Pseudo, true).validate(k)?;
        self.layer_epsilons()?;
        validate_epsilons(&[self.contour.epsilon])?;
        if self.subspace_batch == 0 || self.mia_holdout == 0 {
            return Err(Error::Config("subspace batch and holdout sizes must be positive".into()));
        }
        if self.contour.points == 0 || !(self.contour.half_width > 0.0) {
            return Err(Error::Config("contour grid must be non-empty".into()));
        }
        Network::new(self.architecture.clone(), k)?;
        Ok(())
    }

    pub fn layer_epsilons(&self) -> Result<Vec<f64>> {
        self.plan_for(crate::unlearn::Labeling::Pseudo, true)
            .epsilons_for(self.architecture.len())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.split.train,
            val: self.split.val,
            test: self.split.test,
            unlearn_classes: self.unlearn_classes.clone(),
            seed: self.sub_seed("split"),
        }
    }

    pub fn sub_seed(&self, component: &str) -> u64 {
        derive_seed(self.seed, component)
    }

    pub fn plan_for(&self, labeling: crate::unlearn::Labeling, use_null_space: bool) -> UnlearnPlan {
        let ascend = labeling == crate::unlearn::Labeling::Keep;
        UnlearnPlan {
            unlearn_classes: self.unlearn_classes.clone(),
            labeling,
            use_null_space,
            ascend,
            schedule: self.unlearn.clone(),
            epsilons: self.epsilons.clone(),
            seed: self.sub_seed(&format!("unlearn-{labeling:?}").to_lowercase()),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Data, splits and the trained original model.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub data: Dataset,
    pub splits: Splits,
    pub original: Network,
    pub original_log: TrainLog,
}

pub fn generate_data(config: &ExperimentConfig) -> Result<Dataset> {
    config.data.generate(config.sub_seed("data"))
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let data = generate_data(config)?;
    let splits = split(&data, &config.split_spec())?;
    let (original, original_log) = fit(
        config.architecture.clone(),
        config.num_classes(),
        &splits.train,
        &splits.val,
        &config.train,
        config.sub_seed("train"),
    )?;
    Ok(Prepared { config: config.clone(), data, splits, original, original_log })
}

impl Prepared {
    /// Class batches used to build subspaces, in class order.
    pub fn subspace_batches(&self) -> Result<Vec<Dataset>> {
        class_batches(&self.splits.train, self.config.subspace_batch, self.config.sub_seed("subspace"))
    }

    pub fn projectors(&self, epsilons: Vec<f64>) -> Result<ProjectorCache> {
        let subs = all_class_subspaces(
            &self.original,
            &self.splits.train,
            self.config.subspace_batch,
            self.config.sub_seed("subspace"),
        )?;
        ProjectorCache::new(subs, epsilons)
    }

    /// Build batches of every class outside the unlearn set, concatenated.
    pub fn remaining_build_batch(&self) -> Result<Dataset> {
        let batches = self.subspace_batches()?;
        let parts: Vec<&Dataset> = batches
            .iter()
            .enumerate()
            .filter(|(k, _)| !self.config.unlearn_classes.contains(k))
            .map(|(_, b)| b)
            .collect();
        Dataset::concat(&parts)
    }

    pub fn unlearn(&self, plan: &UnlearnPlan, projectors: Option<&ProjectorCache>) -> Result<(Network, UnlearnLog)> {
        run_plan(&self.original, &self.splits.d_u, plan, projectors)
    }

    pub fn retrain(&self) -> Result<(Network, TrainLog)> {
        let val_r = self.splits.val.filter_classes(&self.config.unlearn_classes, false);
        retrain_oracle(
            self.config.architecture.clone(),
            self.config.num_classes(),
            &self.splits.d_r,
            &val_r,
            &self.config.train,
            self.config.sub_seed("train"),
        )
    }

    pub fn utility(&self, net: &Network) -> Result<UtilityReport> {
        utility(net, &self.splits.test_remaining, &self.splits.test_unlearn)
    }

    /// Holdouts: shuffled remaining training samples (members) and
    /// shuffled remaining test samples (non-members).
    pub fn mia_holdouts(&self) -> (Dataset, Dataset) {
        let mut rng = SeededRng::new(self.config.sub_seed("mia"));
        let mut pick = |ds: &Dataset| {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            rng.shuffle(&mut idx);
            idx.truncate(self.config.mia_holdout);
            ds.subset(&idx)
        };
        let members = pick(&self.splits.d_r);
        let nonmembers = pick(&self.splits.test_remaining);
        (members, nonmembers)
    }

    pub fn mia(&self, net: &Network) -> Result<MiaReport> {
        let (m, nm) = self.mia_holdouts();
        mia(net, &self.splits.d_u, &m, &nm, "members: remaining training samples; non-members: remaining test samples")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub acc_remaining_test: f64,
    pub acc_unlearn_test: Option<f64>,
    pub acc_mia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub config_hash: String,
    pub seed: u64,
    pub data_hash: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, method: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,acc_remaining_test,acc_unlearn_test,acc_mia\n");
        for r in &self.rows {
            let ut = r.acc_unlearn_test.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.method, r.acc_remaining_test, ut, r.acc_mia));
        }
        out
    }
}

pub const ABLATION_METHODS: [&str; 5] = ["original", "retrain", "rl", "rl+null_space", "unsc"];

/// The five-row comparison: original, retrain, random labels with and
/// without null-space projection, and the full method.
pub fn ablation(p: &Prepared) -> Result<AblationTable> {
    use crate::unlearn::Labeling;
    let cache = p.projectors(p.config.layer_epsilons()?)?;
    let nets = vec![
        p.original.clone(),
        p.retrain()?.0,
        p.unlearn(&p.config.plan_for(Labeling::Random, false), None)?.0,
        p.unlearn(&p.config.plan_for(Labeling::Random, true), Some(&cache))?.0,
        p.unlearn(&p.config.plan_for(Labeling::Pseudo, true), Some(&cache))?.0,
    ];
    let rows = ABLATION_METHODS
        .iter()
        .zip(&nets)
        .map(|(name, net)| {
            let u = p.utility(net)?;
            Ok(AblationRow {
                method: name.to_string(),
                acc_remaining_test: u.acc_remaining_test,
                acc_unlearn_test: u.acc_unlearn_test,
                acc_mia: p.mia(net)?.acc_mia,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable {
        config_hash: p.config.hash(),
        seed: p.config.seed,
        data_hash: p.data.content_hash(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_preset_is_valid() {
        let c = ExperimentConfig::toy();
        c.validate().unwrap();
        assert_eq!(c.num_classes(), 4);
    }

    #[test]
    fn hash_tracks_content() {
        let c = ExperimentConfig::toy();
        assert_eq!(c.hash(), c.clone().hash());
        assert_ne!(c.hash(), c.with_seed(c.seed + 1).hash());
    }

    #[test]
    fn invalid_epsilon_is_rejected() {
        let mut c = ExperimentConfig::toy();
        c.epsilons = vec![1.2];
        assert!(c.validate().is_err());
    }
}
