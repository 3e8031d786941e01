//! Pseudo-labelling, null-space projected unlearning, and the baselines it
//! is compared against (retraining, random labels, gradient ascent).

use serde::{Deserialize, Serialize};

use crate::data::split::validate_unlearn_set;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{apply_projection, Matrix};
use crate::nn::{accuracy, fit, LayerSpec, Network, Schedule, TrainLog};
use crate::rng::SeededRng;
use crate::subspace::{validate_epsilons, ProjectorCache, DEFAULT_EPSILON};

pub const MANIFEST_VERSION: u32 = 1;

/// Target labels used while fine-tuning on the unlearning set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labeling {
    /// Most probable remaining class under the original model.
    Pseudo,
    /// Uniform over the remaining classes, drawn once per sample.
    Random,
    /// The original label (only meaningful with gradient ascent).
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnSchedule {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for UnlearnSchedule {
    fn default() -> Self {
        UnlearnSchedule { lr: 0.04, epochs: 25, batch_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnPlan {
    pub unlearn_classes: Vec<usize>,
    pub labeling: Labeling,
    pub use_null_space: bool,
    #[serde(default)]
    pub ascend: bool,
    #[serde(default)]
    pub schedule: UnlearnSchedule,
    /// One threshold per layer, or a single value for all layers.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_epsilons() -> Vec<f64> {
    vec![DEFAULT_EPSILON]
}

impl UnlearnPlan {
    /// Full method: pseudo-labels under null-space projection.
    pub fn unsc(unlearn_classes: Vec<usize>, schedule: UnlearnSchedule, epsilons: Vec<f64>, seed: u64) -> Self {
        UnlearnPlan {
            unlearn_classes,
            labeling: Labeling::Pseudo,
            use_null_space: true,
            ascend: false,
            schedule,
            epsilons,
            seed,
        }
    }

    pub fn random_labels(unlearn_classes: Vec<usize>, schedule: UnlearnSchedule, use_null_space: bool, seed: u64) -> Self {
        UnlearnPlan {
            unlearn_classes,
            labeling: Labeling::Random,
            use_null_space,
            ascend: false,
            schedule,
            epsilons: default_epsilons(),
            seed,
        }
    }

    pub fn gradient_ascent(unlearn_classes: Vec<usize>, schedule: UnlearnSchedule, seed: u64) -> Self {
        UnlearnPlan {
            unlearn_classes,
            labeling: Labeling::Keep,
            use_null_space: false,
            ascend: true,
            schedule,
            epsilons: default_epsilons(),
            seed,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        validate_unlearn_set(&self.unlearn_classes, num_classes, false)?;
        match (self.labeling, self.ascend) {
            (Labeling::Pseudo | Labeling::Random, false) | (Labeling::Keep, true) => {}
            (l, a) => {
                return Err(Error::Config(format!(
                    "unsupported unlearning variant: labeling {l:?} with ascend={a}"
                )))
            }
        }
        let s = &self.schedule;
        if !(s.lr >= 0.0 && s.lr.is_finite()) {
            return Err(Error::Config(format!("unlearning rate {} must be non-negative", s.lr)));
        }
        if s.batch_size == 0 {
            return Err(Error::Config("unlearning batch size must be positive".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("no energy thresholds given".into()));
        }
        validate_epsilons(&self.epsilons)
    }

    /// Per-layer thresholds, broadcasting a single value.
    pub fn epsilons_for(&self, num_layers: usize) -> Result<Vec<f64>> {
        match self.epsilons.len() {
            1 => Ok(vec![self.epsilons[0]; num_layers]),
            n if n == num_layers => Ok(self.epsilons.clone()),
            n => Err(Error::Config(format!("{n} energy thresholds for {num_layers} layers"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
    pub pseudo_label: usize,
}

/// Highest-probability class outside `unlearn_classes`; ties go to the
/// lowest index.
pub fn pseudo_label_from_probs(probs: &[f64], unlearn_classes: &[usize]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (k, &p) in probs.iter().enumerate() {
        if unlearn_classes.contains(&k) {
            continue;
        }
        if best.is_none_or(|b| p > probs[b]) {
            best = Some(k);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("every class is being unlearned; no pseudo-label exists".into()))
}

pub fn pseudo_label(net_o: &Network, sample: &[f64], label: usize, unlearn_classes: &[usize]) -> Result<usize> {
    if !unlearn_classes.contains(&label) {
        return Err(Error::InvalidArgument(format!("label {label} is not being unlearned")));
    }
    let x = Matrix::from_vec(sample.len(), 1, sample.to_vec())?;
    let probs = net_o.predict_proba(&x)?;
    pseudo_label_from_probs(probs.as_slice(), unlearn_classes)
}

/// Pseudo-labels for every sample of `d_u` in one batched pass.
pub fn pseudo_label_all(net_o: &Network, d_u: &Dataset, unlearn_classes: &[usize]) -> Result<Vec<PseudoLabeledSample>> {
    if let Some(&y) = d_u.labels().iter().find(|y| !unlearn_classes.contains(y)) {
        return Err(Error::InvalidArgument(format!("label {y} is not being unlearned")));
    }
    if d_u.is_empty() {
        return Ok(Vec::new());
    }
    let probs = net_o.predict_proba(&d_u.all_columns())?.transpose();
    (0..d_u.len())
        .map(|i| {
            Ok(PseudoLabeledSample {
                features: d_u.sample(i).to_vec(),
                label: d_u.labels()[i],
                pseudo_label: pseudo_label_from_probs(probs.row(i), unlearn_classes)?,
            })
        })
        .collect()
}

/// Uniform labels outside the unlearn set, one draw per sample.
pub fn random_labels(d_u: &Dataset, unlearn_classes: &[usize], rng: &mut SeededRng) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..d_u.num_classes()).filter(|k| !unlearn_classes.contains(k)).collect();
    if pool.is_empty() {
        return Err(Error::InvalidArgument("no remaining classes to draw labels from".into()));
    }
    Ok(d_u.labels().iter().map(|_| pool[rng.below(pool.len())]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnLog {
    /// Training targets, aligned with the unlearning set.
    pub targets: Vec<usize>,
    /// Mean loss against the targets, per epoch.
    pub epoch_loss: Vec<f64>,
    /// Accuracy on the unlearning set's original labels after each epoch.
    pub epoch_forget_accuracy: Vec<f64>,
}

/// Runs any supported plan. `projectors` is required when the plan uses the
/// null space; the projector for a batch of class `c` protects every other class.
pub fn run_plan(
    net_o: &Network,
    d_u: &Dataset,
    plan: &UnlearnPlan,
    projectors: Option<&ProjectorCache>,
) -> Result<(Network, UnlearnLog)> {
    let k = net_o.num_classes();
    plan.validate(k)?;
    if d_u.is_empty() {
        return Err(Error::Empty("unlearning set".into()));
    }
    if d_u.num_classes() != k || d_u.dim() != net_o.input_dim() {
        return Err(Error::Shape("unlearning set does not match the network".into()));
    }
    if let Some(&y) = d_u.labels().iter().find(|y| !plan.unlearn_classes.contains(y)) {
        return Err(Error::InvalidArgument(format!("unlearning set holds class {y}, which is not being unlearned")));
    }

    let mut rng = SeededRng::new(plan.seed);
    let targets = match plan.labeling {
        Labeling::Pseudo => pseudo_label_all(net_o, d_u, &plan.unlearn_classes)?
            .into_iter()
            .map(|s| s.pseudo_label)
            .collect(),
        Labeling::Random => random_labels(d_u, &plan.unlearn_classes, &mut rng)?,
        Labeling::Keep => d_u.labels().to_vec(),
    };

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &c in &plan.unlearn_classes {
        let idx = d_u.class_indices(c);
        if !idx.is_empty() {
            groups.push((c, idx));
        }
    }
    let cache = if plan.use_null_space {
        let cache = projectors.ok_or_else(|| Error::Config("null-space unlearning needs projectors".into()))?;
        for (c, _) in &groups {
            let p = cache.get(*c)?;
            if p.layers.len() != net_o.num_layers() {
                return Err(Error::Shape(format!(
                    "projector for class {c} has {} layers, network has {}",
                    p.layers.len(),
                    net_o.num_layers()
                )));
            }
        }
        Some(cache)
    } else {
        None
    };

    let mut net = net_o.clone();
    let mut log = UnlearnLog { targets, epoch_loss: Vec::new(), epoch_forget_accuracy: Vec::new() };
    let step = if plan.ascend { plan.schedule.lr } else { -plan.schedule.lr };
    for epoch in 0..plan.schedule.epochs {
        let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
        for (c, idx) in &mut groups {
            rng.shuffle(idx);
            batches.extend(idx.chunks(plan.schedule.batch_size).map(|b| (*c, b.to_vec())));
        }
        rng.shuffle(&mut batches);

        let mut loss_sum = 0.0;
        for (c, idx) in &batches {
            let x = d_u.columns(idx);
            let y: Vec<usize> = idx.iter().map(|&i| log.targets[i]).collect();
            let mut g = net.loss_and_grads(&x, &y)?;
            if let Some(cache) = cache {
                let p = cache.get(*c)?;
                g.grads = g
                    .grads
                    .iter()
                    .zip(&p.layers)
                    .map(|(gl, pl)| apply_projection(gl, &pl.projector))
                    .collect::<Result<_>>()?;
            }
            net.add_scaled(step, &g.grads)?;
            loss_sum += g.loss * idx.len() as f64;
        }
        let loss = loss_sum / d_u.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("unlearning loss diverged at epoch {}", epoch + 1)));
        }
        if let Some((r, c)) = net.weights().iter().find_map(|w| w.find_non_finite()) {
            return Err(Error::Numeric(format!("non-finite weight at ({r}, {c}) in epoch {}", epoch + 1)));
        }
        log.epoch_loss.push(loss);
        log.epoch_forget_accuracy.push(accuracy(&net, d_u)?);
    }
    Ok((net, log))
}

/// The full method. Rejects plans that are not pseudo-labelled with null-space projection.
pub fn unsc_unlearn(net_o: &Network, d_u: &Dataset, projectors: &ProjectorCache, plan: &UnlearnPlan) -> Result<(Network, UnlearnLog)> {
    if plan.labeling != Labeling::Pseudo || !plan.use_null_space || plan.ascend {
        return Err(Error::Config("unsc_unlearn needs pseudo-labels with null-space projection".into()));
    }
    run_plan(net_o, d_u, plan, Some(projectors))
}

/// Random-label or gradient-ascent unlearning, optionally projected.
pub fn baseline_unlearn(
    net_o: &Network,
    d_u: &Dataset,
    plan: &UnlearnPlan,
    projectors: Option<&ProjectorCache>,
) -> Result<(Network, UnlearnLog)> {
    if plan.labeling == Labeling::Pseudo {
        return Err(Error::Config("pseudo-labelling is the full method, not a baseline".into()));
    }
    run_plan(net_o, d_u, plan, projectors)
}

/// Trains from scratch on the remaining data only, with the same seed
/// derivation as the original model.
pub fn retrain_oracle(
    specs: Vec<LayerSpec>,
    num_classes: usize,
    d_r: &Dataset,
    val_remaining: &Dataset,
    schedule: &Schedule,
    seed: u64,
) -> Result<(Network, TrainLog)> {
    if d_r.is_empty() {
        return Err(Error::Empty("remaining set".into()));
    }
    fit(specs, num_classes, d_r, val_remaining, schedule, seed)
}

/// Record of one unlearning run, written next to the unlearned checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub plan: UnlearnPlan,
    pub seed: u64,
    pub config_hash: String,
    pub source_checkpoint_hash: String,
    pub result_checkpoint_hash: String,
    pub epoch_loss: Vec<f64>,
    pub epoch_forget_accuracy: Vec<f64>,
    /// Per-layer orthogonality residuals on the projector build batches.
    pub audit_residuals: Vec<f64>,
}
