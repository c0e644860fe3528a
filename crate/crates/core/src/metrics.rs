//! Utility, cost and robustness metrics for a trained classifier.
//!
//! Confidence metrics only look at correctly classified samples: a sample is
//! correct when its highest-probability class equals the label. Probability
//! ties resolve to the lowest class index, both for the prediction and for
//! top-k membership. Standard deviations are population deviations.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::TrainTrace;
use crate::schedules::{param_count_for_budget, LrPolicy};

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid prediction batch: {0}")]
    InvalidBatch(String),
    #[error("k = {k} is outside 1..={classes}")]
    KOutOfRange { k: usize, classes: usize },
    #[error("no correctly classified samples")]
    NoCorrectSamples,
    #[error("need at least two classes with correct samples, found {found}")]
    InsufficientClasses { found: usize },
    #[error("trace has no evaluation points")]
    EmptyTrace,
}

/// Class-probability rows with their ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    probs: Array2<f64>,
    labels: Vec<usize>,
}

impl PredictionBatch {
    /// Rows must be probability vectors (entries in `[0, 1]`, sum 1 within
    /// 1e-9); there must be at least one row and two classes.
    pub fn new(probs: Array2<f64>, labels: Vec<usize>) -> Result<Self, MetricsError> {
        let (n, c) = probs.dim();
        if n == 0 || c < 2 {
            return Err(MetricsError::InvalidBatch(format!(
                "need n >= 1 and C >= 2, got {n}x{c}"
            )));
        }
        if labels.len() != n {
            return Err(MetricsError::InvalidBatch(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= c) {
            return Err(MetricsError::InvalidBatch(format!("label {y} >= C = {c}")));
        }
        for (i, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(MetricsError::InvalidBatch(format!("row {i} has entries outside [0, 1]")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(MetricsError::InvalidBatch(format!("row {i} sums to {s}")));
            }
        }
        Ok(PredictionBatch { probs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Predicted class of sample `i`.
    pub fn predicted(&self, i: usize) -> usize {
        argmax(self.probs.row(i))
    }

    /// Zero-based position of the true label when classes are ordered by
    /// probability (descending), then index (ascending).
    pub fn label_rank(&self, i: usize) -> usize {
        let row = self.probs.row(i);
        let y = self.labels[i];
        let py = row[y];
        row.iter()
            .enumerate()
            .filter(|&(j, &p)| p > py || (p == py && j < y))
            .count()
    }

    /// `(class, confidence)` of every correctly classified sample, in sample order.
    pub fn correct_confidences(&self) -> Vec<(usize, f64)> {
        (0..self.len())
            .filter(|&i| self.label_rank(i) == 0)
            .map(|i| (self.labels[i], self.probs[[i, self.labels[i]]]))
            .collect()
    }
}

fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = j;
        }
    }
    best
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Percentage of samples whose label is among the `k` most probable classes.
pub fn top_k_accuracy(batch: &PredictionBatch, k: usize) -> Result<f64, MetricsError> {
    let classes = batch.n_classes();
    if k == 0 || k > classes {
        return Err(MetricsError::KOutOfRange { k, classes });
    }
    let hits = (0..batch.len()).filter(|&i| batch.label_rank(i) < k).count();
    Ok(100.0 * hits as f64 / batch.len() as f64)
}

/// Mean true-class probability over correctly classified samples (AC).
pub fn average_confidence(batch: &PredictionBatch) -> Result<f64, MetricsError> {
    let conf: Vec<f64> = batch.correct_confidences().into_iter().map(|(_, c)| c).collect();
    if conf.is_empty() {
        return Err(MetricsError::NoCorrectSamples);
    }
    Ok(mean(&conf))
}

/// Population standard deviation of the same confidences (CD).
pub fn confidence_deviation(batch: &PredictionBatch) -> Result<f64, MetricsError> {
    let conf: Vec<f64> = batch.correct_confidences().into_iter().map(|(_, c)| c).collect();
    if conf.is_empty() {
        return Err(MetricsError::NoCorrectSamples);
    }
    Ok(population_std(&conf))
}

/// Average confidence per class; `None` for classes without a correct sample.
pub fn class_confidences(batch: &PredictionBatch) -> Vec<Option<f64>> {
    let c = batch.n_classes();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (class, conf) in batch.correct_confidences() {
        sums[class] += conf;
        counts[class] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| (n > 0).then(|| s / n as f64))
        .collect()
}

/// Population standard deviation of the per-class average confidences
/// (CDAC). Classes without correctly classified samples are left out.
pub fn confidence_deviation_across_classes(batch: &PredictionBatch) -> Result<f64, MetricsError> {
    let per_class: Vec<f64> = class_confidences(batch).into_iter().flatten().collect();
    if per_class.len() < 2 {
        return Err(MetricsError::InsufficientClasses { found: per_class.len() });
    }
    Ok(population_std(&per_class))
}

/// Train and test loss at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub train_loss: f64,
    pub test_loss: f64,
}

/// LD: test loss minus train loss. Positive values indicate over-fitting.
pub fn loss_difference(pair: LossPair) -> f64 {
    pair.test_loss - pair.train_loss
}

/// Iteration and value of the highest top-1 accuracy; the earliest wins ties.
pub fn best_iteration(trace: &TrainTrace) -> Result<(u64, f64), MetricsError> {
    best_point_index(trace).map(|i| (trace.points[i].iter, trace.points[i].top1))
}

pub(crate) fn best_point_index(trace: &TrainTrace) -> Result<usize, MetricsError> {
    let mut best: Option<usize> = None;
    for (i, p) in trace.points.iter().enumerate() {
        match best {
            Some(b) if trace.points[b].top1 >= p.top1 => {}
            _ => best = Some(i),
        }
    }
    best.ok_or(MetricsError::EmptyTrace)
}

/// Confidence metrics of one batch; absent where undefined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfidenceStats {
    pub ac: Option<f64>,
    pub cd: Option<f64>,
    pub cdac: Option<f64>,
    /// Classes left out of CDAC because none of their samples was correct.
    pub cdac_excluded: Vec<usize>,
}

pub fn confidence_stats(batch: &PredictionBatch) -> ConfidenceStats {
    let per_class = class_confidences(batch);
    ConfidenceStats {
        ac: average_confidence(batch).ok(),
        cd: confidence_deviation(batch).ok(),
        cdac: confidence_deviation_across_classes(batch).ok(),
        cdac_excluded: per_class
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_none().then_some(i))
            .collect(),
    }
}

/// The evaluation metrics of one completed trial.
///
/// Serializes to the CSV columns `top1,top5,ac,cd,cdac,ld,best_iter,param_count`;
/// undefined confidence metrics are written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub top1: f64,
    pub top5: f64,
    pub ac: Option<f64>,
    pub cd: Option<f64>,
    pub cdac: Option<f64>,
    pub ld: f64,
    pub best_iter: u64,
    pub param_count: usize,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 8] =
        ["top1", "top5", "ac", "cd", "cdac", "ld", "best_iter", "param_count"];

    /// Builds the report from the evaluation point with the highest top-1
    /// accuracy. `budget` is the run's total iteration count.
    pub fn from_trace(
        trace: &TrainTrace,
        policy: &LrPolicy,
        budget: u64,
    ) -> Result<Self, MetricsError> {
        let p = &trace.points[best_point_index(trace)?];
        Ok(MetricReport {
            top1: p.top1,
            top5: p.top5,
            ac: p.confidence.ac,
            cd: p.confidence.cd,
            cdac: p.confidence.cdac,
            ld: loss_difference(LossPair { train_loss: p.train_loss, test_loss: p.test_loss }),
            best_iter: p.iter,
            param_count: param_count_for_budget(policy, budget),
        })
    }
}
