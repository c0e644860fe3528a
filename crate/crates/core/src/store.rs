//! Append-only store of tuning results.
//!
//! One JSON document per line. A line only counts once its terminating
//! newline is on disk, so an interrupted append leaves a torn tail that
//! readers skip and the next writer cuts off before appending. Writers hold
//! an exclusive lock on the file for the whole append.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricReport;
use crate::schedules::LrPolicy;
use crate::tuner::{rank_policies, TrialResult};

pub const RECORD_VERSION: u32 = 1;
/// Environment variable naming the default store file.
pub const STORE_ENV: &str = "RATEBENCH_STORE";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("{path}: line {line} is not a valid record: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub version: u32,
    /// Assigned by the store.
    pub id: u64,
    pub dataset_id: String,
    pub model_id: String,
    pub task: String,
    pub policy: LrPolicy,
    pub report: MetricReport,
    #[serde(default)]
    pub diverged: bool,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub toolkit_version: String,
}

impl TrialRecord {
    pub fn new(
        dataset_id: impl Into<String>,
        model_id: impl Into<String>,
        task: impl Into<String>,
        policy: LrPolicy,
        report: MetricReport,
        seed: u64,
    ) -> Self {
        TrialRecord {
            version: RECORD_VERSION,
            id: 0,
            dataset_id: dataset_id.into(),
            model_id: model_id.into(),
            task: task.into(),
            policy,
            report,
            diverged: false,
            seed,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.dataset_id.is_empty() || self.model_id.is_empty() || self.task.is_empty() {
            return Err(StoreError::Invalid("dataset_id, model_id and task must be non-empty".into()));
        }
        if self.version != RECORD_VERSION {
            return Err(StoreError::Invalid(format!("unsupported record version {}", self.version)));
        }
        self.policy
            .validate()
            .into_result()
            .map_err(|e| StoreError::Invalid(e.to_string()))
    }

    fn as_trial(&self) -> TrialResult {
        TrialResult {
            policy: self.policy.clone(),
            report: Some(self.report.clone()),
            diverged: self.diverged,
            error: None,
            wall_time: 0.0,
        }
    }
}

/// Which fallback level produced a recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    /// Same dataset and model.
    Exact,
    SameDataset,
    SameTask,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Exact => "exact",
            Tier::SameDataset => "same-dataset",
            Tier::SameTask => "same-task",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    /// `None` when nothing matched; run a range test instead.
    pub tier: Option<Tier>,
    pub policies: Vec<LrPolicy>,
}

#[derive(Debug)]
pub struct PolicyStore {
    path: PathBuf,
    records: Vec<TrialRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Complete records in `bytes`, ignoring a torn final line. Returns them with
/// the byte length of the complete prefix.
fn parse(path: &Path, bytes: &[u8]) -> Result<(Vec<TrialRecord>, usize), StoreError> {
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut records = Vec::new();
    for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let record: TrialRecord = serde_json::from_slice(line)
            .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        records.push(record);
    }
    Ok((records, complete))
}

impl PolicyStore {
    /// Opens the store at `path` and loads its records. A missing file is an
    /// empty store; it is created on the first append.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let mut store = PolicyStore { path: path.as_ref().to_path_buf(), records: Vec::new() };
        store.refresh()?;
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    /// Reloads records written since opening.
    pub fn refresh(&mut self) -> Result<(), StoreError> {
        let mut file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                self.records.clear();
                return Ok(());
            }
            Err(e) => return Err(io_err(&self.path)(e)),
        };
        file.lock_shared().map_err(io_err(&self.path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(&self.path))?;
        self.records = parse(&self.path, &bytes)?.0;
        Ok(())
    }

    /// Appends `record` durably and returns its id, one above the largest id
    /// on disk.
    pub fn put_result(&mut self, mut record: TrialRecord) -> Result<u64, StoreError> {
        record.validate()?;
        let path = self.path.clone();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(io_err(&path))?;
        file.lock().map_err(io_err(&path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(&path))?;
        let (records, complete) = parse(&path, &bytes)?;
        if complete < bytes.len() {
            file.set_len(complete as u64).map_err(io_err(&path))?;
        }
        record.id = records.iter().map(|r| r.id).max().unwrap_or(0) + 1;
        let mut line = serde_json::to_vec(&record).map_err(|e| StoreError::Invalid(e.to_string()))?;
        line.push(b'\n');
        file.seek(SeekFrom::Start(complete as u64)).map_err(io_err(&path))?;
        file.write_all(&line).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))?;
        let id = record.id;
        self.records = records;
        self.records.push(record);
        Ok(id)
    }

    /// Records matching every given field, best top-1 first.
    pub fn query(&self, dataset_id: &str, model_id: Option<&str>, task: Option<&str>) -> Vec<TrialRecord> {
        let mut out: Vec<TrialRecord> = self
            .records
            .iter()
            .filter(|r| {
                r.dataset_id == dataset_id
                    && model_id.is_none_or(|m| r.model_id == m)
                    && task.is_none_or(|t| r.task == t)
            })
            .cloned()
            .collect();
        out.sort_by(|a, b| b.report.top1.total_cmp(&a.report.top1).then(a.id.cmp(&b.id)));
        out
    }

    /// Up to `n` distinct policies from the first non-empty tier: exact
    /// (dataset, model), then same dataset, then same task.
    pub fn recommend(&self, dataset_id: &str, model_id: &str, task: &str, n: usize) -> Recommendation {
        let tiers: [(Tier, Box<dyn Fn(&TrialRecord) -> bool>); 3] = [
            (Tier::Exact, Box::new(|r| r.dataset_id == dataset_id && r.model_id == model_id)),
            (Tier::SameDataset, Box::new(|r| r.dataset_id == dataset_id)),
            (Tier::SameTask, Box::new(|r| r.task == task)),
        ];
        for (tier, matches) in tiers {
            let trials: Vec<TrialResult> = self.records.iter().filter(|r| matches(r)).map(TrialRecord::as_trial).collect();
            if trials.is_empty() {
                continue;
            }
            let mut policies: Vec<LrPolicy> = Vec::new();
            for t in rank_policies(&trials, trials.len()) {
                if policies.len() < n && !policies.contains(&t.policy) {
                    policies.push(t.policy);
                }
            }
            return Recommendation { tier: Some(tier), policies };
        }
        Recommendation { tier: None, policies: Vec::new() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(top1: f64) -> MetricReport {
        MetricReport { top1, top5: 100.0, ac: Some(0.9), cd: Some(0.1), cdac: None, ld: 0.01, best_iter: 10, param_count: 1 }
    }

    fn record(dataset: &str, model: &str, task: &str, k0: f64, top1: f64) -> TrialRecord {
        let mut r = TrialRecord::new(dataset, model, task, LrPolicy::fix(k0), report(top1), 1);
        r.timestamp = 0;
        r
    }

    #[test]
    fn write_then_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ndjson");
        let mut store = PolicyStore::open(&path).unwrap();
        assert!(store.query("mnist", None, None).is_empty());
        let a = store.put_result(record("mnist", "mlp-100", "classification-10", 0.01, 90.0)).unwrap();
        let b = store.put_result(record("mnist", "mlp-100", "classification-10", 0.02, 91.0)).unwrap();
        assert!(b > a);
        let reopened = PolicyStore::open(&path).unwrap();
        assert_eq!(reopened.records(), store.records());
        assert_eq!(reopened.records()[0].id, a);
    }

    #[test]
    fn empty_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = PolicyStore::open(dir.path().join("s")).unwrap();
        assert!(matches!(store.put_result(record("", "m", "t", 0.1, 1.0)), Err(StoreError::Invalid(_))));
        assert!(!dir.path().join("s").exists() || store.records().is_empty());
    }

    #[test]
    fn query_filters_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = PolicyStore::open(dir.path().join("s")).unwrap();
        store.put_result(record("a", "m1", "t", 0.01, 80.0)).unwrap();
        store.put_result(record("b", "m1", "t", 0.02, 99.0)).unwrap();
        store.put_result(record("a", "m2", "t", 0.03, 85.0)).unwrap();
        let got: Vec<f64> = store.query("a", None, None).iter().map(|r| r.report.top1).collect();
        assert_eq!(got, vec![85.0, 80.0]);
        assert_eq!(store.query("a", Some("m1"), None).len(), 1);
        assert!(store.query("a", None, Some("other")).is_empty());
    }

    #[test]
    fn recommend_tiers() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = PolicyStore::open(dir.path().join("s")).unwrap();
        assert_eq!(store.recommend("a", "m", "t", 3), Recommendation { tier: None, policies: vec![] });
        store.put_result(record("z", "q", "t", 0.05, 70.0)).unwrap();
        store.put_result(record("z", "q", "t", 0.06, 75.0)).unwrap();
        let r = store.recommend("a", "m", "t", 3);
        assert_eq!(r.tier, Some(Tier::SameTask));
        assert_eq!(r.policies, vec![LrPolicy::fix(0.06), LrPolicy::fix(0.05)]);
        store.put_result(record("a", "other", "t", 0.07, 60.0)).unwrap();
        assert_eq!(store.recommend("a", "m", "t", 3).tier, Some(Tier::SameDataset));
        store.put_result(record("a", "m", "t", 0.08, 50.0)).unwrap();
        let r = store.recommend("a", "m", "t", 1);
        assert_eq!(r.tier, Some(Tier::Exact));
        assert_eq!(r.policies, vec![LrPolicy::fix(0.08)]);
    }

    #[test]
    fn torn_tail_is_skipped_then_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s");
        let mut store = PolicyStore::open(&path).unwrap();
        store.put_result(record("a", "m", "t", 0.01, 1.0)).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"version":1,"id":2,"dataset_"#).unwrap();
        drop(f);
        assert_eq!(PolicyStore::open(&path).unwrap().records().len(), 1);
        let id = store.put_result(record("a", "m", "t", 0.02, 2.0)).unwrap();
        assert_eq!(id, 2);
        let reread = PolicyStore::open(&path).unwrap();
        assert_eq!(reread.records().len(), 2);
        assert_eq!(reread.records()[1].policy, LrPolicy::fix(0.02));
    }

    #[test]
    fn corrupt_complete_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(PolicyStore::open(&path), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
