use std::fs;

use persymm::cache::{CacheError, CacheRecord, DistCache};
use persymm::oracle::EnumerationBudget;
use persymm_core::StackedShape;

fn budget() -> EnumerationBudget {
    EnumerationBudget::default().with_workers(2)
}

#[test]
fn miss_then_hit_returns_the_same_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let shape = StackedShape::parse("[2;2]x5").unwrap();
    let first = DistCache::open(&path).unwrap().lookup_or_compute(&shape, &budget()).unwrap();
    let reopened = DistCache::open(&path).unwrap();
    assert_eq!(reopened.len(), 1);
    assert_eq!(reopened.get(&shape), Some(&first));
}

#[test]
fn poisoned_checksum_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let shape = StackedShape::parse("[2]x2").unwrap();
    DistCache::open(&path).unwrap().lookup_or_compute(&shape, &budget()).unwrap();
    let good = fs::read_to_string(&path).unwrap();
    let bad = good.replace("\"4\"", "\"5\"");
    fs::write(&path, format!("{good}{bad}")).unwrap();
    match DistCache::open(&path) {
        Err(CacheError::Corrupt { line, reason, .. }) => {
            assert_eq!(line, 2);
            assert!(reason.contains("sum"), "{reason}");
        }
        other => panic!("expected a corrupt-record error, got {other:?}"),
    }
}

#[test]
fn malformed_json_and_wrong_param_count_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    fs::write(&path, "{not json\n").unwrap();
    assert!(matches!(DistCache::open(&path), Err(CacheError::Corrupt { line: 1, .. })));
    let rec = CacheRecord {
        shape: "[2]x2".into(),
        counts: vec!["1".into(), "3".into(), "4".into()],
        free_param_count: 4,
        engine_version: persymm::cache::ENGINE_VERSION.into(),
        wall_time: 0,
    };
    fs::write(&path, serde_json::to_string(&rec).unwrap() + "\n").unwrap();
    assert!(matches!(DistCache::open(&path), Err(CacheError::Corrupt { .. })));
}

#[test]
fn other_engine_versions_are_kept_but_not_served() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let rec = CacheRecord {
        shape: "[2]x2".into(),
        counts: vec!["1".into(), "3".into(), "4".into()],
        free_param_count: 3,
        engine_version: "0.0.0-old".into(),
        wall_time: 5,
    };
    fs::write(&path, serde_json::to_string(&rec).unwrap() + "\n").unwrap();
    let mut c = DistCache::open(&path).unwrap();
    let shape = StackedShape::parse("[2]x2").unwrap();
    assert!(c.get(&shape).is_none());
    c.lookup_or_compute(&shape, &budget()).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("0.0.0-old"));
}

#[test]
fn readers_never_see_a_torn_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let shapes: Vec<_> = (1..=12)
        .map(|k| StackedShape::parse(&format!("[2;2]x{k}")).unwrap())
        .collect();
    let stop = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|s| {
        let reader = s.spawn(|| {
            let mut opened = 0;
            while !stop.load(std::sync::atomic::Ordering::Relaxed) {
                // every snapshot must parse and validate completely
                DistCache::open(&path).expect("consistent snapshot");
                opened += 1;
            }
            opened
        });
        let mut c = DistCache::open(&path).unwrap();
        for shape in &shapes {
            c.lookup_or_compute(shape, &budget()).unwrap();
        }
        stop.store(true, std::sync::atomic::Ordering::Relaxed);
        assert!(reader.join().unwrap() > 0);
    });
    assert_eq!(DistCache::open(&path).unwrap().len(), shapes.len());
}
