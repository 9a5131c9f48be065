//! The bundled fixture against its frozen detection list and ground truth.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use backlog_groom::clock::SystemClock;

use backlog_groom::dedup::{detect_duplicates, EngineConfig};
use backlog_groom::embedding::Embedder;
use backlog_groom::eval::load_ground_truth;
use backlog_groom::gateway::{BacklogGateway, FixtureGateway};
use backlog_groom::model::{canonicalize_pair, BacklogSnapshot};

fn expected() -> (f64, BTreeMap<(String, String), f64>) {
    let text = std::fs::read_to_string(common::fixtures().join("expected_detections.csv")).unwrap();
    let mut threshold = None;
    let mut pairs = BTreeMap::new();
    for line in text.lines() {
        if let Some(t) = line.strip_prefix("# threshold=") {
            threshold = Some(t.trim().parse().unwrap());
            continue;
        }
        if line.starts_with("issue_a") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let pair = canonicalize_pair(cols[0], cols[1]).unwrap();
        pairs.insert(
            (pair.a().to_string(), pair.b().to_string()),
            cols[2].parse().unwrap(),
        );
    }
    (threshold.expect("threshold header"), pairs)
}

fn snapshot() -> BacklogSnapshot {
    FixtureGateway::new(common::backlog51(), Arc::new(SystemClock))
        .fetch_backlog()
        .unwrap()
}

#[test]
fn fixture_scan_matches_frozen_detections() {
    let (threshold, expected) = expected();
    let found = detect_duplicates(
        &snapshot(),
        &Embedder::local(256),
        &EngineConfig::with_threshold(threshold),
    )
    .unwrap();
    assert_eq!(found.len(), expected.len());
    for cand in &found {
        let key = (cand.pair.a().to_string(), cand.pair.b().to_string());
        let want = expected
            .get(&key)
            .unwrap_or_else(|| panic!("unexpected pair {}", cand.pair));
        assert!(
            (cand.score - want).abs() < 1e-9,
            "{}: {} vs {}",
            cand.pair,
            cand.score,
            want
        );
    }
}

#[test]
fn detections_at_the_documented_threshold_are_all_true() {
    let (threshold, expected) = expected();
    let truth = load_ground_truth(common::truth51(), None).unwrap();
    assert_eq!(truth.n_issues, 51);
    assert_eq!(truth.true_pairs.len(), 41);
    assert_eq!(threshold, 0.65);
    for (a, b) in expected.keys() {
        assert!(
            truth
                .true_pairs
                .contains(&canonicalize_pair(a.as_str(), b.as_str()).unwrap()),
            "{a}~{b}"
        );
    }
}
