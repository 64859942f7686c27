//! Mini-batch Adam training with plateau learning-rate decay.
//!
//! Training is sequential and bit-reproducible: the scenario order of epoch
//! `e` is a shuffle seeded by `(seed + e, TRAIN_SHUFFLE)`, so a run resumed
//! from a checkpoint replays exactly the batches an uninterrupted run would.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::{backprop::loss_and_gradients, Aggregation, GnnModel, ModelShape};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub initial_lr: f64,
    pub epochs: usize,
    /// Scenarios per mini-batch.
    pub batch_size: usize,
    pub plateau_epochs: usize,
    pub lr_decay_factor: f64,
    /// Smallest gain in validation accuracy that counts as an improvement.
    pub plateau_threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 0.006,
            epochs: 50,
            batch_size: 800,
            plateau_epochs: 2,
            lr_decay_factor: 0.5,
            plateau_threshold: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.initial_lr, self.eps, self.beta1, self.beta2];
        if positive.iter().any(|v| !(*v > 0.0)) || self.epochs == 0 || self.batch_size == 0 || self.plateau_epochs == 0 {
            return Err(Error::Config(format!("training schedule values must be positive: {self:?}")));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::Config(format!("lr decay factor must lie in (0, 1), got {}", self.lr_decay_factor)));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("Adam betas must be below 1".into()));
        }
        Ok(())
    }
}

/// Labelled users of several scenarios, features unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    /// `D × U` raw features.
    pub x: DMatrix<f64>,
    /// Column range of each scenario.
    pub groups: Vec<Range<usize>>,
    /// 0-based angle index per user.
    pub angle_labels: Vec<usize>,
    /// 0-based ring index per user.
    pub dist_labels: Vec<usize>,
}

impl TrainData {
    pub fn num_scenarios(&self) -> usize {
        self.groups.len()
    }

    pub fn num_users(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// The listed scenarios, in the given order.
    pub fn subset(&self, scenarios: &[usize]) -> TrainData {
        let users: usize = scenarios.iter().map(|&i| self.groups[i].len()).sum();
        let mut x = DMatrix::zeros(self.x.nrows(), users);
        let mut groups = Vec::with_capacity(scenarios.len());
        let mut angle_labels = Vec::with_capacity(users);
        let mut dist_labels = Vec::with_capacity(users);
        let mut col = 0;
        for &i in scenarios {
            let g = self.groups[i].clone();
            x.columns_mut(col, g.len()).copy_from(&self.x.columns(g.start, g.len()));
            groups.push(col..col + g.len());
            angle_labels.extend_from_slice(&self.angle_labels[g.clone()]);
            dist_labels.extend_from_slice(&self.dist_labels[g.clone()]);
            col += g.len();
        }
        TrainData { x, groups, angle_labels, dist_labels }
    }

    /// Root-mean-square feature value.
    pub fn feature_rms(&self) -> f64 {
        (self.x.norm_squared() / self.x.len().max(1) as f64).sqrt()
    }
}

/// Adam moments for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, schedule: &TrainSchedule) {
        let (b1, b2) = (schedule.beta1, schedule.beta2);
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + schedule.eps);
        }
    }
}

/// Plateau detector on validation accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub best: f64,
    pub stale_epochs: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self { best: f64::NEG_INFINITY, stale_epochs: 0 }
    }
}

impl Plateau {
    /// Records one epoch; returns true when the learning rate should decay.
    pub fn observe(&mut self, accuracy: f64, schedule: &TrainSchedule) -> bool {
        if accuracy > self.best + schedule.plateau_threshold {
            self.best = accuracy;
            self.stale_epochs = 0;
            return false;
        }
        self.stale_epochs += 1;
        if self.stale_epochs >= schedule.plateau_epochs {
            self.stale_epochs = 0;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_acc_angle: f64,
    pub val_acc_dist: f64,
    pub val_acc_overall: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,val_acc_angle,val_acc_dist,val_acc_overall\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.lr, r.train_loss, r.val_acc_angle, r.val_acc_dist, r.val_acc_overall
        ));
    }
    out
}

/// Angle, distance and joint top-1 accuracy of a model on labelled data.
pub fn evaluate(model: &GnnModel, data: &TrainData) -> Result<(f64, f64, f64)> {
    if data.num_users() == 0 {
        return Err(Error::Invalid("no users to evaluate".into()));
    }
    let (mut hit_a, mut hit_d, mut hit) = (0usize, 0usize, 0usize);
    let chunk = 512;
    let order: Vec<usize> = (0..data.num_scenarios()).collect();
    for part in order.chunks(chunk) {
        let sub = data.subset(part);
        let (pa, pd) = model.predict_features(&(&sub.x * model.input_scale), &sub.groups)?;
        for u in 0..sub.num_users() {
            let a = super::argmax(pa.column(u).as_slice()) == sub.angle_labels[u];
            let d = super::argmax(pd.column(u).as_slice()) == sub.dist_labels[u];
            hit_a += a as usize;
            hit_d += d as usize;
            hit += (a && d) as usize;
        }
    }
    let n = data.num_users() as f64;
    Ok((hit_a as f64 / n, hit_d as f64 / n, hit as f64 / n))
}

/// Resumable training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: GnnModel,
    pub best_model: GnnModel,
    pub best_accuracy: f64,
    pub adam_angle: AdamState,
    pub adam_distance: AdamState,
    pub lr: f64,
    pub plateau: Plateau,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub schedule: TrainSchedule,
    pub seed: u64,
}

impl Trainer {
    pub fn new(train: &TrainData, shape: ModelShape, aggregation: Aggregation, schedule: TrainSchedule, seed_value: u64) -> Result<Self> {
        schedule.validate()?;
        if train.is_empty() {
            return Err(Error::Invalid("empty training set".into()));
        }
        if train.x.nrows() != shape.input_dim {
            return Err(Error::Shape(format!("{} features for a model expecting {}", train.x.nrows(), shape.input_dim)));
        }
        let mut model = GnnModel::new(shape, aggregation, &mut seed::rng(seed_value, seed::stream::TRAIN_INIT))?;
        let rms = train.feature_rms();
        model.input_scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
        Ok(Self {
            adam_angle: AdamState::new(model.angle.num_params()),
            adam_distance: AdamState::new(model.distance.num_params()),
            best_model: model.clone(),
            best_accuracy: f64::NEG_INFINITY,
            model,
            lr: schedule.initial_lr,
            plateau: Plateau::default(),
            epoch: 0,
            history: Vec::new(),
            schedule,
            seed: seed_value,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.schedule.epochs
    }

    /// One pass over `train`, then validation on `val` (or on `train` when
    /// `val` is empty).
    pub fn run_epoch(&mut self, train: &TrainData, val: &TrainData) -> Result<EpochRecord> {
        let mut order: Vec<usize> = (0..train.num_scenarios()).collect();
        let mut rng = seed::rng(seed::split(self.seed, self.epoch as u64), seed::stream::TRAIN_SHUFFLE);
        order.shuffle(&mut rng);

        let lr = self.lr;
        let (mut loss_sum, mut users) = (0.0, 0usize);
        let mut flat_a = self.model.angle.flatten();
        let mut flat_d = self.model.distance.flatten();
        for batch in order.chunks(self.schedule.batch_size) {
            let sub = train.subset(batch);
            let x = &sub.x * self.model.input_scale;
            let (loss, grads) = loss_and_gradients(&self.model, &x, &sub.groups, &sub.angle_labels, &sub.dist_labels)?;
            loss_sum += loss * sub.num_users() as f64;
            users += sub.num_users();
            self.adam_angle.step(&mut flat_a, &grads.angle.flatten(), lr, &self.schedule);
            self.adam_distance.step(&mut flat_d, &grads.distance.flatten(), lr, &self.schedule);
            self.model.angle.assign(&flat_a)?;
            self.model.distance.assign(&flat_d)?;
        }

        let (acc_a, acc_d, acc) = evaluate(&self.model, if val.is_empty() { train } else { val })?;
        self.epoch += 1;
        let record = EpochRecord {
            epoch: self.epoch,
            lr,
            train_loss: loss_sum / users as f64,
            val_acc_angle: acc_a,
            val_acc_dist: acc_d,
            val_acc_overall: acc,
        };
        if acc > self.best_accuracy {
            self.best_accuracy = acc;
            self.best_model = self.model.clone();
        }
        if self.plateau.observe(acc, &self.schedule) {
            self.lr *= self.schedule.lr_decay_factor;
        }
        self.history.push(record);
        Ok(record)
    }
}

/// Trained model (best validation epoch) and per-epoch history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: GnnModel,
    pub history: Vec<EpochRecord>,
}

pub fn train(
    train: &TrainData,
    val: &TrainData,
    shape: ModelShape,
    aggregation: Aggregation,
    schedule: TrainSchedule,
    seed_value: u64,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(train, shape, aggregation, schedule, seed_value)?;
    while !trainer.is_finished() {
        trainer.run_epoch(train, val)?;
    }
    Ok(TrainOutcome { model: trainer.best_model, history: trainer.history })
}
