use serde::{Deserialize, Serialize};

use super::model::{Gradients, PointSetModel};
use crate::data::{augment, LabeledCloud};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::{child_seed, child_stream, stream};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 60, batch_size: 32, learning_rate: 5e-4, optimizer: Optimizer::Adam, seed: 0, augment: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::BadConfig("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::BadConfig(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Cosine annealing from `lr0` at epoch 0 to zero at epoch `total`.
pub fn cosine_lr(lr0: f64, epoch: usize, total: usize) -> f64 {
    let t = epoch.min(total) as f64 / total.max(1) as f64;
    lr0 * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One model plus its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: PointSetModel,
    optimizer: Optimizer,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
}

impl Trainer {
    pub fn new(model: PointSetModel, optimizer: Optimizer) -> Self {
        let n = model.param_count();
        Self { model, optimizer, first: vec![0.0; n], second: vec![0.0; n], steps: 0 }
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        self.steps += 1;
        let mut offset = 0;
        let bc1 = 1.0 - BETA1.powi(self.steps as i32);
        let bc2 = 1.0 - BETA2.powi(self.steps as i32);
        for (params, g) in self.model.slices_mut().zip(grads.slices()) {
            match self.optimizer {
                Optimizer::Sgd => {
                    for (p, &g) in params.iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
                Optimizer::Adam => {
                    let m = &mut self.first[offset..offset + params.len()];
                    let v = &mut self.second[offset..offset + params.len()];
                    for (((p, &g), m), v) in params.iter_mut().zip(g).zip(m).zip(v) {
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
            offset += params.len();
        }
    }

    /// One gradient step on a mini-batch; returns the batch loss before the step.
    pub fn step(&mut self, batch: &[(&PointCloud, usize)], lr: f64) -> StepStats {
        let (loss, grads, probs) = self.model.loss_gradients_probs(batch);
        let correct = batch
            .iter()
            .zip(probs.rows())
            .filter(|((_, y), p)| super::model::argmax(p.as_slice().unwrap()) == *y)
            .count();
        if loss.is_finite() {
            self.apply(&grads, lr);
        }
        StepStats { loss, correct, count: batch.len() }
    }
}

/// Per-epoch training curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl TrainLog {
    pub(crate) fn push(&mut self, loss_sum: f64, correct: usize, count: usize) {
        self.loss.push(loss_sum / count.max(1) as f64);
        self.accuracy.push(correct as f64 / count.max(1) as f64);
    }
}

/// Mini-batch training of a full-cloud classifier.
///
/// Each epoch shuffles the data, optionally augments every sample, and steps
/// with the cosine-annealed learning rate of that epoch. Randomness for
/// epoch `e` comes from its own child stream of `config.seed`.
pub fn train(model: PointSetModel, dataset: &[LabeledCloud], config: &TrainConfig) -> Result<(PointSetModel, TrainLog)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyEval);
    }
    check_labels(dataset, model.classes())?;
    let mut trainer = Trainer::new(model, config.optimizer);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        let lr = cosine_lr(config.learning_rate, epoch, config.epochs);
        let epoch_seed = child_seed(config.seed, epoch as u64);
        order.shuffle(&mut stream(epoch_seed));
        let (mut loss_sum, mut correct) = (0.0, 0);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let clouds: Vec<PointCloud> = chunk
                .iter()
                .map(|&i| {
                    if config.augment {
                        augment(&dataset[i].cloud, &mut child_stream(epoch_seed, 1 + i as u64))
                    } else {
                        Ok(dataset[i].cloud.clone())
                    }
                })
                .collect::<Result<_>>()?;
            let batch: Vec<(&PointCloud, usize)> =
                clouds.iter().zip(chunk).map(|(c, &i)| (c, dataset[i].label)).collect();
            let stats = trainer.step(&batch, lr);
            if !stats.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi, loss: stats.loss });
            }
            loss_sum += stats.loss * stats.count as f64;
            correct += stats.correct;
        }
        log.push(loss_sum, correct, dataset.len());
    }
    Ok((trainer.model, log))
}

pub(crate) fn check_labels(dataset: &[LabeledCloud], classes: usize) -> Result<()> {
    if let Some(s) = dataset.iter().find(|s| s.label >= classes) {
        return Err(Error::BadConfig(format!(
            "sample {} has label {} but the model has {classes} classes",
            s.sample_id, s.label
        )));
    }
    Ok(())
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(model: &PointSetModel, dataset: &[LabeledCloud]) -> f64 {
    let mut correct = 0;
    for chunk in dataset.chunks(64) {
        let clouds: Vec<&PointCloud> = chunk.iter().map(|s| &s.cloud).collect();
        correct += model
            .predict_batch(&clouds)
            .iter()
            .zip(chunk)
            .filter(|(p, s)| p.argmax() == s.label)
            .count();
    }
    correct as f64 / dataset.len().max(1) as f64
}
