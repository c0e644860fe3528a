//! Mini-batch training driven by a learning-rate policy.

use std::io;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::{self, init_model, ModelSpec, ModelState};
use super::optim::{Optimizer, OptimizerSpec};
use super::EngineError;
use crate::metrics::{confidence_stats, top_k_accuracy, ConfidenceStats};
use crate::rng;
use crate::schedules::{LrKind, LrPolicy};

/// Parameter norm above which a run counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// A mini-batch loss above this multiple of `max(initial train loss, ln C)`
/// counts as divergence. A ReLU network driven by an oversized rate tends to
/// kill its hidden units and stall at a finite loss instead of overflowing,
/// so non-finite values alone miss it.
pub const DIVERGENCE_LOSS_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub policy: LrPolicy,
    pub batch_size: usize,
    pub max_iter: u64,
    /// Evaluate every this many iterations (plus once at `max_iter`).
    pub eval_interval: u64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.policy.validate().into_result()?;
        if self.batch_size == 0 {
            return Err(EngineError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.eval_interval == 0 || (self.max_iter > 0 && self.eval_interval > self.max_iter) {
            return Err(EngineError::InvalidConfig(format!(
                "eval_interval must lie in 1..=max_iter (got {} for max_iter {})",
                self.eval_interval, self.max_iter
            )));
        }
        if self.policy.kind == LrKind::Poly && self.policy.max_iter.unwrap_or(0) < self.max_iter {
            return Err(EngineError::InvalidConfig(format!(
                "POLY horizon {} is shorter than the training budget {}",
                self.policy.max_iter.unwrap_or(0),
                self.max_iter
            )));
        }
        Ok(())
    }
}

/// One evaluation: losses over the full train and test sets, accuracy and
/// confidence on the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub top1: f64,
    pub top5: f64,
    pub confidence: ConfidenceStats,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub points: Vec<TracePoint>,
    /// Iteration during which the loss went non-finite or exploded (see
    /// [`DIVERGENCE_LOSS_FACTOR`]) or the parameter norm exceeded
    /// [`DIVERGENCE_NORM`]. Training stops there.
    pub diverged_at: Option<u64>,
}

impl TrainTrace {
    pub const CSV_HEADER: [&'static str; 6] = ["iter", "lr", "train_loss", "test_loss", "top1", "top5"];

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for p in &self.points {
            w.write_record([
                p.iter.to_string(),
                p.lr.to_string(),
                p.train_loss.to_string(),
                p.test_loss.to_string(),
                p.top1.to_string(),
                p.top5.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Iterations in one epoch; the ragged final batch is dropped.
pub fn iterations_per_epoch(n_train: usize, batch_size: usize) -> usize {
    n_train / batch_size
}

/// Sample order for `epoch`, a fresh permutation of `0..n` per epoch.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &format!("shuffle/{epoch}")));
    order
}

fn evaluate(
    model: &ModelState,
    iter: u64,
    lr: f64,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TracePoint, EngineError> {
    let (train_loss, _) = model::losses(model, train_set.features(), train_set.labels())?;
    let test = model::forward(model, test_set.features(), test_set.labels())?;
    let k5 = 5.min(test.predictions.n_classes());
    Ok(TracePoint {
        iter,
        lr,
        train_loss,
        test_loss: test.data_loss,
        top1: top_k_accuracy(&test.predictions, 1)?,
        top5: top_k_accuracy(&test.predictions, k5)?,
        confidence: confidence_stats(&test.predictions),
    })
}

/// Trains a freshly initialized model and returns its evaluation trace.
pub fn train(
    config: &TrainConfig,
    model_spec: &ModelSpec,
    optimizer_spec: &OptimizerSpec,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TrainTrace, EngineError> {
    train_with_model(config, model_spec, optimizer_spec, train_set, test_set).map(|(t, _)| t)
}

/// Like [`train`], also returning the final parameters.
///
/// Iteration `t` (0-based) uses `lr_at(policy, t)`. Trace points are taken
/// before the first update (iteration 0), after every `eval_interval`
/// updates, and after the last one; each records the rate for the next
/// iteration.
pub fn train_with_model(
    config: &TrainConfig,
    model_spec: &ModelSpec,
    optimizer_spec: &OptimizerSpec,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<(TrainTrace, ModelState), EngineError> {
    config.validate()?;
    model_spec.validate()?;
    optimizer_spec.validate()?;
    if train_set.dim() != test_set.dim() {
        return Err(EngineError::DimensionMismatch { expected: train_set.dim(), found: test_set.dim() });
    }
    let per_epoch = iterations_per_epoch(train_set.len(), config.batch_size) as u64;
    if per_epoch == 0 {
        return Err(EngineError::InvalidConfig(format!(
            "batch_size {} exceeds the {} training samples",
            config.batch_size,
            train_set.len()
        )));
    }
    let classes = train_set.n_classes().max(test_set.n_classes());
    let mut model = init_model(model_spec, train_set.dim(), classes, config.seed)?;
    let mut optimizer = Optimizer::new(*optimizer_spec);
    let policy = &config.policy;

    let mut trace = TrainTrace::default();
    let initial = evaluate(&model, 0, policy.lr_at(0)?, train_set, test_set)?;
    let loss_ceiling = DIVERGENCE_LOSS_FACTOR * initial.train_loss.max((classes as f64).ln());
    trace.points.push(initial);

    let mut order = Vec::new();
    for t in 0..config.max_iter {
        let slot = (t % per_epoch) as usize;
        if slot == 0 {
            order = epoch_order(config.seed, t / per_epoch, train_set.len());
        }
        let (x, y) = train_set.select(&order[slot * config.batch_size..(slot + 1) * config.batch_size]);
        let lr = policy.lr_at(t)?;
        let (loss, grads) = model::loss_and_gradients(&model, x.view(), &y)?;
        if !(loss <= loss_ceiling) {
            trace.diverged_at = Some(t);
            break;
        }
        optimizer.step(&mut model, &grads, lr);
        let norm = model.squared_norm().sqrt();
        if !(norm <= DIVERGENCE_NORM) {
            trace.diverged_at = Some(t);
            break;
        }
        let done = t + 1;
        if done % config.eval_interval == 0 || done == config.max_iter {
            let point = evaluate(&model, done, policy.lr_at(done)?, train_set, test_set)?;
            if !(point.train_loss.is_finite() && point.test_loss.is_finite()) {
                trace.diverged_at = Some(t);
                break;
            }
            trace.points.push(point);
        }
    }
    Ok((trace, model))
}
