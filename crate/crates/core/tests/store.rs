use std::fs::OpenOptions;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratebench_core::metrics::MetricReport;
use ratebench_core::store::*;
use ratebench_core::LrPolicy;

fn record(i: u64) -> TrialRecord {
    let report = MetricReport {
        top1: 50.0 + (i % 50) as f64,
        top5: 100.0,
        ac: Some(0.5),
        cd: None,
        cdac: Some(0.01),
        ld: 0.02,
        best_iter: i,
        param_count: 3,
    };
    TrialRecord::new("blobs", "mlp-32", "classification-3", LrPolicy::tri(0.001, 0.01 + i as f64 * 1e-4, 24), report, i)
}

#[test]
fn interrupted_appends_never_surface_partial_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.ndjson");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut expected: Vec<TrialRecord> = Vec::new();
    for i in 0..300 {
        let mut store = PolicyStore::open(&path).unwrap();
        assert_eq!(store.records(), &expected[..]);
        if rng.random_bool(0.5) {
            let line = serde_json::to_string(&record(i)).unwrap();
            let cut = rng.random_range(0..line.len());
            let mut f = OpenOptions::new().create(true).append(true).open(&path).unwrap();
            f.write_all(&line.as_bytes()[..cut]).unwrap();
        } else {
            store.put_result(record(i)).unwrap();
            expected = store.records().to_vec();
        }
    }
    let ids: Vec<u64> = expected.iter().map(|r| r.id).collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn concurrent_writers_serialize() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.ndjson");
    std::thread::scope(|s| {
        for w in 0..4 {
            let path = path.clone();
            s.spawn(move || {
                let mut store = PolicyStore::open(&path).unwrap();
                for i in 0..25 {
                    store.put_result(record(w * 100 + i)).unwrap();
                }
            });
        }
    });
    let store = PolicyStore::open(&path).unwrap();
    let mut ids: Vec<u64> = store.records().iter().map(|r| r.id).collect();
    ids.sort_unstable();
    assert_eq!(ids, (1..=100).collect::<Vec<_>>());
}

#[test]
fn recommendations_come_from_the_query_of_their_tier() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = PolicyStore::open(dir.path().join("s")).unwrap();
    for i in 0..10 {
        let mut r = record(i);
        r.model_id = if i % 2 == 0 { "mlp-32".into() } else { "linear".into() };
        store.put_result(r).unwrap();
    }
    let rec = store.recommend("blobs", "linear", "classification-3", 3);
    assert_eq!(rec.tier, Some(Tier::Exact));
    let pool: Vec<LrPolicy> = store.query("blobs", Some("linear"), None).into_iter().map(|r| r.policy).collect();
    assert_eq!(rec.policies.len(), 3);
    assert!(rec.policies.iter().all(|p| pool.contains(p)));
    assert_eq!(rec.policies[0], pool[0]);
}
