use serde::{Deserialize, Serialize};

use super::network::{argmax_columns, LayerSpec, Network};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};

/// SGD schedule with step decay and validation early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs at which the learning rate is multiplied by `gamma`.
    #[serde(default)]
    pub milestones: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Stop after this many epochs without a strict improvement in
    /// validation accuracy. `None` runs the full budget.
    #[serde(default)]
    pub patience: Option<usize>,
}

fn default_gamma() -> f64 {
    0.2
}

impl Default for Schedule {
    /// Original-model protocol: lr 0.1 decayed ×0.2 at epochs 60/120/160,
    /// 200 epochs, patience 30, batch 512.
    fn default() -> Self {
        Schedule {
            lr: 0.1,
            epochs: 200,
            batch_size: 512,
            milestones: vec![60, 120, 160],
            gamma: 0.2,
            patience: Some(30),
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("lr decay factor must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * self.gamma.powi(decays as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs_run: usize,
    /// 1-based epoch whose weights were returned; 0 means the input weights.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
}

pub fn accuracy(net: &Network, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("accuracy on empty dataset".into()));
    }
    let pred = predict(net, ds)?;
    let hits = pred.iter().zip(ds.labels()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / ds.len() as f64)
}

pub fn predict(net: &Network, ds: &Dataset) -> Result<Vec<usize>> {
    Ok(argmax_columns(&net.predict_proba(&ds.all_columns())?))
}

/// Minibatch SGD on `train`, returning the weights of the epoch with the
/// best validation accuracy (later epochs win ties).
pub fn train(net: &Network, train_set: &Dataset, val_set: &Dataset, schedule: &Schedule, seed: u64) -> Result<(Network, TrainLog)> {
    schedule.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let mut log = TrainLog {
        epochs_run: 0,
        best_epoch: 0,
        best_val_accuracy: 0.0,
        train_loss: Vec::new(),
        val_accuracy: Vec::new(),
    };
    if schedule.epochs == 0 {
        log.best_val_accuracy = accuracy(net, val_set)?;
        return Ok((net.clone(), log));
    }

    let mut rng = SeededRng::new(seed);
    let mut current = net.clone();
    let mut best = net.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let x = train_set.columns(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            let g = current.loss_and_grads(&x, &y)?;
            current.add_scaled(-lr, &g.grads)?;
            loss_sum += g.loss * chunk.len() as f64;
        }
        let epoch_loss = loss_sum / train_set.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {}", epoch + 1)));
        }
        let acc = accuracy(&current, val_set)?;
        log.train_loss.push(epoch_loss);
        log.val_accuracy.push(acc);
        log.epochs_run = epoch + 1;

        if acc > best_acc {
            stale = 0;
        } else {
            stale += 1;
        }
        if acc >= best_acc {
            best_acc = acc;
            best = current.clone();
            log.best_epoch = epoch + 1;
        }
        if schedule.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    log.best_val_accuracy = best_acc;
    Ok((best, log))
}

/// Fresh initialization plus [`train`], with init and shuffle seeds derived
/// from `seed`. Training twice on the same data gives the same network.
pub fn fit(
    specs: Vec<LayerSpec>,
    num_classes: usize,
    train_set: &Dataset,
    val_set: &Dataset,
    schedule: &Schedule,
    seed: u64,
) -> Result<(Network, TrainLog)> {
    let net = Network::init(specs, num_classes, derive_seed(seed, "init"))?;
    train(&net, train_set, val_set, schedule, derive_seed(seed, "shuffle"))
}
