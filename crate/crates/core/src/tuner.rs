//! Range test, CLR bound derivation, schedule candidates, grid execution and
//! ranking.

use std::cmp::Ordering;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::train::iterations_per_epoch;
use crate::engine::{
    load_cifar_bin, load_idx, synth_blobs, train, DataError, Dataset, EngineError, ModelSpec, OptimizerSpec, Split,
    TrainConfig, TrainTrace,
};
use crate::metrics::MetricReport;
use crate::schedules::{LrKind, LrPolicy};

/// Default relative accuracy tolerance for good-range membership.
pub const DEFAULT_DELTA: f64 = 0.02;
pub const DEFAULT_PROBE_EPOCHS: [u64; 3] = [1, 2, 4];
/// Log-spaced zoom values inserted between adjacent coarse values.
pub const DEFAULT_ZOOM_POINTS: usize = 2;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("every tested value diverged")]
    AllDiverged,
    #[error("good range collapsed to the single value {0}; widen the value grid")]
    InsufficientRange(f64),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Everything about a trial except the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub batch_size: usize,
    pub max_iter: u64,
    pub eval_interval: u64,
    pub seed: u64,
}

impl TrialConfig {
    pub fn train_config(&self, policy: LrPolicy) -> TrainConfig {
        TrainConfig {
            policy,
            batch_size: self.batch_size,
            max_iter: self.max_iter,
            eval_interval: self.eval_interval,
            seed: self.seed,
        }
    }
}

/// Datasets, model and optimizer shared by every trial of a tuning session.
#[derive(Debug, Clone, Copy)]
pub struct EngineContext<'a> {
    pub train_set: &'a Dataset,
    pub test_set: &'a Dataset,
    pub model: &'a ModelSpec,
    pub optimizer: &'a OptimizerSpec,
    pub trial: TrialConfig,
}

impl EngineContext<'_> {
    pub fn iterations_per_epoch(&self) -> u64 {
        iterations_per_epoch(self.train_set.len(), self.trial.batch_size) as u64
    }

    fn run(&self, config: &TrainConfig) -> Result<TrainTrace, EngineError> {
        train(config, self.model, self.optimizer, self.train_set, self.test_set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeTestReport {
    /// Ascending.
    pub tested_values: Vec<f64>,
    pub probe_epochs: Vec<u64>,
    /// Best top-1 (percent) up to each probe epoch, one row per tested value.
    pub accuracy_by_value_and_epoch: Vec<Vec<f64>>,
    pub diverged: Vec<bool>,
    pub good_range: (f64, f64),
    pub best_value: f64,
    pub best_accuracy: f64,
    pub reduction_percent: f64,
    pub delta: f64,
}

impl RangeTestReport {
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["value".to_string(), "diverged".to_string()];
        header.extend(self.probe_epochs.iter().map(|e| format!("epoch_{e}")));
        header.push("good".to_string());
        w.write_record(&header)?;
        let (lo, hi) = self.good_range;
        for ((v, row), div) in self.tested_values.iter().zip(&self.accuracy_by_value_and_epoch).zip(&self.diverged) {
            let mut rec = vec![v.to_string(), div.to_string()];
            rec.extend(row.iter().map(|a| a.to_string()));
            rec.push((!div && *v >= lo && *v <= hi && score(row) >= (1.0 - self.delta) * self.best_accuracy).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn score(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

struct Probe {
    value: f64,
    cells: Vec<f64>,
    diverged: bool,
}

fn probe(ctx: &EngineContext, value: f64, epochs: &[u64]) -> Result<Probe, TunerError> {
    let per_epoch = ctx.iterations_per_epoch();
    let budget = epochs.iter().max().copied().unwrap_or(0) * per_epoch;
    let mut trial = ctx.trial;
    trial.max_iter = budget;
    trial.eval_interval = trial.eval_interval.clamp(1, budget.max(1));
    let trace = ctx.run(&trial.train_config(LrPolicy::fix(value)))?;
    let cells = epochs
        .iter()
        .map(|&e| {
            trace
                .points
                .iter()
                .filter(|p| p.iter <= e * per_epoch)
                .map(|p| p.top1)
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(Probe { value, cells, diverged: trace.diverged() })
}

fn round_sig(v: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

/// FIX range test.
///
/// The coarse phase walks `value_grid` from its largest value downwards and
/// stops once two consecutive values score below `(1 − delta)·best`. The zoom
/// phase adds `zoom_points` log-spaced values between each pair of adjacent
/// coarse values that bracket the passing ones. Each value is trained once
/// for the longest probe; shorter probes read the same trace. Diverged values
/// never count as good.
pub fn fix_range_test(
    ctx: &EngineContext,
    probe_epochs: &[u64],
    value_grid: &[f64],
    delta: f64,
    zoom_points: usize,
) -> Result<RangeTestReport, TunerError> {
    if value_grid.is_empty() || probe_epochs.is_empty() {
        return Err(TunerError::InvalidInput("value grid and probe epochs must be non-empty".into()));
    }
    if value_grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) || value_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TunerError::InvalidInput("value grid must be positive and strictly ascending".into()));
    }
    if probe_epochs.contains(&0) || !(0.0..1.0).contains(&delta) {
        return Err(TunerError::InvalidInput("probe epochs must be >= 1 and delta in [0, 1)".into()));
    }

    let mut probes: Vec<Probe> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut dropping = 0;
    for &v in value_grid.iter().rev() {
        let p = probe(ctx, v, probe_epochs)?;
        if !p.diverged {
            let s = score(&p.cells);
            if s > best {
                best = s;
                dropping = 0;
            } else if s < (1.0 - delta) * best {
                dropping += 1;
            } else {
                dropping = 0;
            }
        }
        probes.push(p);
        if dropping >= 2 {
            break;
        }
    }
    if probes.iter().all(|p| p.diverged) {
        return Err(TunerError::AllDiverged);
    }
    probes.reverse();

    let passing: Vec<usize> = (0..probes.len())
        .filter(|&i| !probes[i].diverged && score(&probes[i].cells) >= (1.0 - delta) * best)
        .collect();
    let first = passing[0].saturating_sub(1);
    let last = (passing[passing.len() - 1] + 1).min(probes.len() - 1);
    let mut zoom = Vec::new();
    for i in first..last {
        let (a, b) = (probes[i].value, probes[i + 1].value);
        for j in 1..=zoom_points {
            let v = round_sig(a * (b / a).powf(j as f64 / (zoom_points + 1) as f64), 3);
            if v > a && v < b && !zoom.contains(&v) {
                zoom.push(v);
            }
        }
    }
    let zoomed: Vec<Probe> = zoom.par_iter().map(|&v| probe(ctx, v, probe_epochs)).collect::<Result<_, _>>()?;
    probes.extend(zoomed);
    probes.sort_by(|a, b| a.value.total_cmp(&b.value));

    let (mut best_value, mut best_accuracy) = (f64::NAN, f64::NEG_INFINITY);
    for p in probes.iter().filter(|p| !p.diverged) {
        if score(&p.cells) > best_accuracy {
            best_accuracy = score(&p.cells);
            best_value = p.value;
        }
    }
    let good: Vec<f64> = probes
        .iter()
        .filter(|p| !p.diverged && score(&p.cells) >= (1.0 - delta) * best_accuracy)
        .map(|p| p.value)
        .collect();
    let (lo, hi) = (good[0], good[good.len() - 1]);
    if lo == hi {
        return Err(TunerError::InsufficientRange(lo));
    }
    let reduction_percent = search_space_reduction(lo, hi, (0.0, hi.max(1.0)))?;
    Ok(RangeTestReport {
        tested_values: probes.iter().map(|p| p.value).collect(),
        probe_epochs: probe_epochs.to_vec(),
        accuracy_by_value_and_epoch: probes.iter().map(|p| p.cells.clone()).collect(),
        diverged: probes.iter().map(|p| p.diverged).collect(),
        good_range: (lo, hi),
        best_value,
        best_accuracy,
        reduction_percent,
        delta,
    })
}

/// Share of `domain` ruled out by keeping only `[lo, hi]`, in percent.
pub fn search_space_reduction(lo: f64, hi: f64, domain: (f64, f64)) -> Result<f64, TunerError> {
    if !(domain.0 <= lo && lo < hi && hi <= domain.1) {
        return Err(TunerError::InvalidRange(format!(
            "need {} <= lo < hi <= {} (got lo = {lo}, hi = {hi})",
            domain.0, domain.1
        )));
    }
    Ok((1.0 - (hi - lo) / (domain.1 - domain.0)) * 100.0)
}

/// Candidate `(k0, k1)` pairs for cyclic policies seeded by a FIX range.
pub fn derive_clr_bounds(fix_range: (f64, f64)) -> Result<Vec<(f64, f64)>, TunerError> {
    let (lo, hi) = fix_range;
    if !(lo > 0.0 && lo < hi) {
        return Err(TunerError::InvalidRange(format!("need 0 < lo < hi (got {lo}, {hi})")));
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k0, k1) in [(lo / 10.0, hi), (lo / 100.0, hi), (lo, hi), (lo / 10.0, 10.0 * hi)] {
        if k0 < k1 && LrPolicy::tri(k0, k1, 1).validate().is_ok() && !out.contains(&(k0, k1)) {
            out.push((k0, k1));
        }
    }
    Ok(out)
}

/// Schedule lengths as multiples of the iterations in one epoch.
pub fn candidate_schedules(n_train: usize, batch_size: usize, multiples: &[u64]) -> Result<Vec<u64>, TunerError> {
    if batch_size == 0 || batch_size > n_train {
        return Err(TunerError::InvalidInput(format!("need 1 <= batch_size <= n_train (got {batch_size}, {n_train})")));
    }
    let per_epoch = iterations_per_epoch(n_train, batch_size) as u64;
    let mut out: Vec<u64> = multiples.iter().filter(|&&m| m > 0).map(|m| m * per_epoch).collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub policy: LrPolicy,
    /// Best-so-far report; absent only when the trial could not run.
    pub report: Option<MetricReport>,
    pub diverged: bool,
    pub error: Option<String>,
    /// Seconds.
    pub wall_time: f64,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.report.is_none()
    }
}

fn run_trial(ctx: &EngineContext, policy: &LrPolicy) -> TrialResult {
    let start = Instant::now();
    let outcome = ctx
        .run(&ctx.trial.train_config(policy.clone()))
        .and_then(|trace| Ok((MetricReport::from_trace(&trace, policy, ctx.trial.max_iter)?, trace.diverged())));
    let wall_time = start.elapsed().as_secs_f64();
    match outcome {
        Ok((report, diverged)) => TrialResult { policy: policy.clone(), report: Some(report), diverged, error: None, wall_time },
        Err(e) => TrialResult { policy: policy.clone(), report: None, diverged: false, error: Some(e.to_string()), wall_time },
    }
}

/// Runs one trial per policy with identical seeds, on at most `workers`
/// threads. Results keep the input order; failures are recorded per trial.
pub fn run_grid(policies: &[LrPolicy], ctx: &EngineContext, workers: usize) -> Result<Vec<TrialResult>, TunerError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TunerError::InvalidInput(e.to_string()))?;
    Ok(pool.install(|| policies.par_iter().map(|p| run_trial(ctx, p)).collect()))
}

/// Ranking order among trials that produced a report: top-1 descending,
/// best iteration ascending, loss difference ascending, policy serialization,
/// then report serialization.
pub fn compare_trials(a: &TrialResult, b: &TrialResult) -> Ordering {
    match (&a.report, &b.report) {
        (Some(ra), Some(rb)) => rb
            .top1
            .total_cmp(&ra.top1)
            .then(ra.best_iter.cmp(&rb.best_iter))
            .then(ra.ld.total_cmp(&rb.ld))
            .then_with(|| a.policy.canonical().cmp(&b.policy.canonical()))
            .then_with(|| serde_json::to_string(ra).unwrap_or_default().cmp(&serde_json::to_string(rb).unwrap_or_default())),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a
            .policy
            .canonical()
            .cmp(&b.policy.canonical())
            .then_with(|| a.error.cmp(&b.error)),
    }
}

/// Top `n` trials: healthy trials in ranking order, then diverged ones, then
/// trials that failed to run.
pub fn rank_policies(results: &[TrialResult], n: usize) -> Vec<TrialResult> {
    let tier = |r: &TrialResult| match (r.failed(), r.diverged) {
        (true, _) => 2,
        (false, true) => 1,
        (false, false) => 0,
    };
    let mut sorted = results.to_vec();
    sorted.sort_by(|a, b| tier(a).cmp(&tier(b)).then_with(|| compare_trials(a, b)));
    sorted.truncate(n);
    sorted
}

/// Writes one row per trial. `index_column` names the leading 1-based
/// position column (`trial` for input order, `rank` after ranking).
pub fn write_results_csv<W: io::Write>(
    results: &[TrialResult],
    out: W,
    index_column: &str,
    with_timing: bool,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![index_column, "kind", "policy", "diverged", "error"];
    header.extend(MetricReport::CSV_HEADER);
    if with_timing {
        header.push("wall_time");
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, r) in results.iter().enumerate() {
        let mut rec = vec![
            (i + 1).to_string(),
            r.policy.kind.as_str().to_string(),
            r.policy.canonical(),
            r.diverged.to_string(),
            r.error.clone().unwrap_or_default(),
        ];
        match &r.report {
            Some(m) => rec.extend([
                m.top1.to_string(),
                m.top5.to_string(),
                opt(m.ac),
                opt(m.cd),
                opt(m.cdac),
                m.ld.to_string(),
                m.best_iter.to_string(),
                m.param_count.to_string(),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), MetricReport::CSV_HEADER.len())),
        }
        if with_timing {
            rec.push(r.wall_time.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_results_csv`].
pub fn read_results_csv<R: io::Read>(input: R) -> Result<Vec<TrialResult>, TunerError> {
    let bad = |msg: String| TunerError::InvalidInput(msg);
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| bad(format!("results file has no `{name}` column")));
    let (policy_col, diverged_col, error_col) = (need("policy")?, need("diverged")?, need("error")?);
    let metric_cols = MetricReport::CSV_HEADER.map(col);
    let time_col = col("wall_time");
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let policy: LrPolicy =
            serde_json::from_str(cell(policy_col)).map_err(|e| bad(format!("line {line}: policy: {e}")))?;
        let num = |c: Option<usize>| -> Result<Option<f64>, TunerError> {
            match c.map(cell).unwrap_or("") {
                "" => Ok(None),
                v => v.parse().map(Some).map_err(|_| bad(format!("line {line}: bad number `{v}`"))),
            }
        };
        let report = match num(metric_cols[0])? {
            None => None,
            Some(top1) => Some(MetricReport {
                top1,
                top5: num(metric_cols[1])?.unwrap_or(f64::NAN),
                ac: num(metric_cols[2])?,
                cd: num(metric_cols[3])?,
                cdac: num(metric_cols[4])?,
                ld: num(metric_cols[5])?.unwrap_or(f64::NAN),
                best_iter: num(metric_cols[6])?.unwrap_or(0.0) as u64,
                param_count: num(metric_cols[7])?.unwrap_or(0.0) as usize,
            }),
        };
        let error = Some(cell(error_col).to_string()).filter(|e| !e.is_empty());
        out.push(TrialResult {
            policy,
            report,
            diverged: cell(diverged_col) == "true",
            error,
            wall_time: num(time_col)?.unwrap_or(0.0),
        });
    }
    Ok(out)
}

/// Where a grid's datasets come from. Relative paths resolve against the
/// grid file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Blobs { seed: u64, n_per_class: usize, classes: usize, dim: usize, separation: f64 },
    Idx { train_images: PathBuf, train_labels: PathBuf, test_images: PathBuf, test_labels: PathBuf },
    Cifar { train: Vec<PathBuf>, test: Vec<PathBuf> },
}

impl DataSource {
    /// The four standard MNIST file names inside `dir`, each taken gzipped
    /// when the plain file is absent.
    pub fn idx_dir(dir: &Path) -> Self {
        let pick = |name: &str| {
            let plain = dir.join(name);
            if plain.exists() {
                plain
            } else {
                dir.join(format!("{name}.gz"))
            }
        };
        DataSource::Idx {
            train_images: pick("train-images-idx3-ubyte"),
            train_labels: pick("train-labels-idx1-ubyte"),
            test_images: pick("t10k-images-idx3-ubyte"),
            test_labels: pick("t10k-labels-idx1-ubyte"),
        }
    }

    /// The CIFAR-10 binary batches inside `dir`.
    pub fn cifar_dir(dir: &Path) -> Self {
        DataSource::Cifar {
            train: (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
            test: vec![dir.join("test_batch.bin")],
        }
    }

    pub fn load(&self, base: &Path) -> Result<(Dataset, Dataset), DataError> {
        let at = |p: &PathBuf| base.join(p);
        let (train_set, test_set) = match self {
            DataSource::Blobs { seed, n_per_class, classes, dim, separation } => {
                return synth_blobs(*seed, *n_per_class, *classes, *dim, *separation)
            }
            DataSource::Idx { train_images, train_labels, test_images, test_labels } => (
                load_idx(at(train_images), at(train_labels))?,
                load_idx(at(test_images), at(test_labels))?,
            ),
            DataSource::Cifar { train, test } => (
                load_cifar_bin(&train.iter().map(at).collect::<Vec<_>>())?,
                load_cifar_bin(&test.iter().map(at).collect::<Vec<_>>())?,
            ),
        };
        let classes = train_set.n_classes().max(test_set.n_classes());
        Ok((train_set.with_n_classes(classes), test_set.with_split(Split::Test).with_n_classes(classes)))
    }
}

/// A grid file: the policies to compare and the fixed trial setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dataset_id: String,
    pub model_id: Option<String>,
    pub task: String,
    pub data: DataSource,
    pub model: ModelSpec,
    pub optimizer: OptimizerSpec,
    pub trial: TrialConfig,
    pub policies: Vec<LrPolicy>,
}

impl GridSpec {
    pub fn model_id(&self) -> String {
        self.model_id.clone().unwrap_or_else(|| self.model.id())
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        if self.dataset_id.is_empty() || self.task.is_empty() {
            return Err(TunerError::InvalidInput("dataset_id and task must be non-empty".into()));
        }
        for p in &self.policies {
            p.validate().into_result().map_err(|e| TunerError::InvalidInput(format!("{p}: {e}")))?;
        }
        Ok(())
    }
}

/// Cyclic candidates, one per (kind, bounds, l). Bounds are `(low, high)`;
/// COS starts from the high end. `gamma` only applies to the damped kinds.
pub fn cyclic_candidates(kinds: &[LrKind], bounds: &[(f64, f64)], lengths: &[u64], gamma: f64) -> Vec<LrPolicy> {
    let mut out = Vec::new();
    for &kind in kinds {
        for &(low, high) in bounds {
            let (k0, k1) = if kind == LrKind::Cos { (high, low) } else { (low, high) };
            for &l in lengths {
                out.push(match kind {
                    LrKind::Triexp | LrKind::Sinexp => LrPolicy::cyclic_exp(kind, k0, k1, gamma, l),
                    _ => LrPolicy::cyclic(kind, k0, k1, l),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn result(policy: LrPolicy, top1: f64, best_iter: u64, ld: f64, diverged: bool) -> TrialResult {
        TrialResult {
            policy,
            report: Some(MetricReport {
                top1,
                top5: 100.0,
                ac: None,
                cd: None,
                cdac: None,
                ld,
                best_iter,
                param_count: 1,
            }),
            diverged,
            error: None,
            wall_time: 0.0,
        }
    }

    #[test]
    fn reduction_examples() {
        assert_abs_diff_eq!(search_space_reduction(0.00005, 0.006, (0.0, 1.0)).unwrap(), 99.405, epsilon = 1e-9);
        assert_eq!(search_space_reduction(0.0, 1.0, (0.0, 1.0)).unwrap(), 0.0);
        assert_eq!(search_space_reduction(0.25, 0.75, (0.0, 1.0)).unwrap(), 50.0);
        assert!(search_space_reduction(0.5, 0.5, (0.0, 1.0)).is_err());
        assert!(search_space_reduction(0.5, 1.5, (0.0, 1.0)).is_err());
    }

    #[test]
    fn clr_bounds() {
        let c = derive_clr_bounds((0.0005, 0.006)).unwrap();
        assert!(c.iter().any(|&(a, b)| (a - 0.00005).abs() < 1e-18 && b == 0.006));
        assert!(c.iter().all(|(a, b)| a < b));
        assert_eq!(c.len(), 4);
        assert!(derive_clr_bounds((0.01, 0.01)).is_err());
        // 10·hi leaves the unit interval and is filtered out.
        assert_eq!(derive_clr_bounds((0.05, 0.2)).unwrap().len(), 3);
    }

    #[test]
    fn schedule_candidates() {
        assert_eq!(candidate_schedules(50_000, 100, &[1, 2, 4]).unwrap(), vec![500, 1000, 2000]);
        assert_eq!(candidate_schedules(10, 10, &[1]).unwrap(), vec![1]);
        assert_eq!(candidate_schedules(1000, 100, &[2, 1, 2]).unwrap(), vec![10, 20]);
        assert!(candidate_schedules(10, 20, &[1]).is_err());
    }

    #[test]
    fn ranking_keys() {
        let a = result(LrPolicy::fix(0.1), 80.0, 10, 0.1, false);
        let b = result(LrPolicy::fix(0.2), 81.0, 10, 0.1, false);
        assert_eq!(rank_policies(&[a.clone(), b.clone()], 1)[0], b);

        let slow = result(LrPolicy::fix(0.1), 80.86, 70_000, 0.1, false);
        let fast = result(LrPolicy::fix(0.2), 80.86, 67_000, 0.1, false);
        assert_eq!(rank_policies(&[slow, fast.clone()], 2)[0], fast);

        let loose = result(LrPolicy::fix(0.1), 80.0, 5, 0.3, false);
        let tight = result(LrPolicy::fix(0.2), 80.0, 5, 0.1, false);
        assert_eq!(rank_policies(&[loose, tight.clone()], 2)[0], tight);

        let x = result(LrPolicy::fix(0.2), 80.0, 5, 0.1, false);
        let y = result(LrPolicy::fix(0.1), 80.0, 5, 0.1, false);
        assert_eq!(rank_policies(&[x, y.clone()], 2)[0], y);
    }

    #[test]
    fn diverged_and_failed_trials_come_last() {
        let good = result(LrPolicy::fix(0.01), 50.0, 10, 0.0, false);
        let div = result(LrPolicy::fix(10.0), 99.0, 0, 0.0, true);
        let failed = TrialResult { policy: LrPolicy::fix(0.5), report: None, diverged: false, error: Some("x".into()), wall_time: 0.0 };
        let ranked = rank_policies(&[failed.clone(), div.clone(), good.clone()], 3);
        assert_eq!(ranked, vec![good, div.clone(), failed]);
        let all_div = vec![div.clone(), div.clone(), div.clone(), div];
        let r = rank_policies(&all_div, 3);
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|t| t.diverged));
    }

    #[test]
    fn results_csv_header() {
        let mut buf = Vec::new();
        write_results_csv(&[], &mut buf, "rank", false).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rank,kind,policy,diverged,error,top1,top5,ac,cd,cdac,ld,best_iter,param_count\n"
        );
    }

    #[test]
    fn cyclic_candidates_are_valid() {
        let kinds = [LrKind::Tri, LrKind::Sin2, LrKind::Triexp, LrKind::Cos];
        let c = cyclic_candidates(&kinds, &[(0.001, 0.01), (0.0001, 0.01)], &[10, 20], 0.99);
        assert_eq!(c.len(), 16);
        assert!(c.iter().all(|p| p.validate().is_ok()));
    }

    #[test]
    fn results_csv_round_trip() {
        let mut a = result(LrPolicy::tri(0.001, 0.006, 20), 91.25, 40, -0.0125, false);
        a.report.as_mut().unwrap().ac = Some(0.875);
        let b = TrialResult { policy: LrPolicy::fix(0.5), report: None, diverged: false, error: Some("boom, \"quoted\"".into()), wall_time: 1.5 };
        let c = result(LrPolicy::nstep(0.01, 0.9, vec![5, 7]), 30.0, 0, 0.0, true);
        let trials = vec![a, b, c];
        let mut buf = Vec::new();
        write_results_csv(&trials, &mut buf, "trial", true).unwrap();
        let back = read_results_csv(buf.as_slice()).unwrap();
        assert_eq!(back, trials);
    }

    #[test]
    fn grid_spec_parses() {
        let text = r#"{
            "dataset_id": "blobs-3", "task": "classification-3",
            "data": {"kind": "blobs", "seed": 1, "n_per_class": 50, "classes": 3, "dim": 4, "separation": 5.0},
            "model": {"arch": "softmax-linear", "init": "xavier-uniform", "weight_decay": 0.0},
            "optimizer": {"kind": "momentum", "momentum": 0.9},
            "trial": {"batch_size": 10, "max_iter": 20, "eval_interval": 5, "seed": 1},
            "policies": [{"kind": "FIX", "k0": 0.01}, {"kind": "TRI", "k0": 0.01, "k1": 0.1, "l": 10}]
        }"#;
        let spec: GridSpec = serde_json::from_str(text).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.model_id(), "linear");
        let (tr, te) = spec.data.load(Path::new(".")).unwrap();
        assert_eq!((tr.len(), te.len()), (120, 30));
    }
}
