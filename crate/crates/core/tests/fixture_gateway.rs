mod common;

use std::sync::Arc;

use backlog_groom::gateway::{open_gateway, FixtureFile, GatewayConfig, GatewayError, StepOutcome};
use backlog_groom::model::{GroomingAction, IssueStatus};

#[test]
fn bundled_fixture_loads() {
    let gw = open_gateway(&GatewayConfig::fixture(common::backlog51())).unwrap();
    let snapshot = gw.fetch_backlog().unwrap();
    assert_eq!(snapshot.project_key, "SHOP");
    assert_eq!(snapshot.len(), 51);
    assert!(snapshot.issues.windows(2).all(|w| w[0].key < w[1].key));
}

#[test]
fn merge_persists_and_is_visible_to_a_fresh_gateway() {
    let (_dir, path) = common::backlog_copy();
    let action = GroomingAction::MergeCluster {
        survivor: "SHOP-8".into(),
        absorbed: vec!["SHOP-16".into()],
        summary: "Merged summary".into(),
        description: "Merged description".into(),
    };
    let receipt = open_gateway(&GatewayConfig::fixture(&path))
        .unwrap()
        .apply_action(&action)
        .unwrap();
    assert!(receipt.is_success());

    let snapshot = open_gateway(&GatewayConfig::fixture(&path))
        .unwrap()
        .fetch_backlog()
        .unwrap();
    let survivor = snapshot.get("SHOP-8").unwrap();
    assert_eq!(survivor.summary, "Merged summary");
    assert_eq!(snapshot.get("SHOP-16").unwrap().status, IssueStatus::Closed);
    let file = FixtureFile::load(&path).unwrap();
    assert!(file
        .issue("SHOP-16")
        .unwrap()
        .links
        .iter()
        .any(|l| l.target == "SHOP-8"));

    let replay = open_gateway(&GatewayConfig::fixture(&path))
        .unwrap()
        .apply_action(&action)
        .unwrap();
    assert!(replay
        .steps
        .iter()
        .all(|s| s.outcome == StepOutcome::AlreadySatisfied));
}

#[test]
fn failed_validation_leaves_file_untouched() {
    let (_dir, path) = common::backlog_copy();
    let before = std::fs::read(&path).unwrap();
    let action = GroomingAction::UpdateStatus {
        key: "SHOP-404".into(),
        status: IssueStatus::Done,
    };
    let err = open_gateway(&GatewayConfig::fixture(&path))
        .unwrap()
        .apply_action(&action)
        .unwrap_err();
    assert_eq!(err, GatewayError::UnknownIssue("SHOP-404".into()));
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[test]
fn reads_never_observe_a_half_written_file() {
    let (_dir, path) = common::backlog_copy();
    let gw = open_gateway(&GatewayConfig::fixture(&path)).unwrap();
    let writer = {
        let gw = Arc::clone(&gw);
        std::thread::spawn(move || {
            for i in 0..20 {
                let action = GroomingAction::CreateIssue {
                    summary: format!("New issue {i}"),
                    description: String::new(),
                    labels: Default::default(),
                };
                gw.apply_action(&action).unwrap();
            }
        })
    };
    let mut last = 0;
    for _ in 0..50 {
        let n = gw.fetch_backlog().unwrap().len();
        assert!(n >= last);
        last = n;
    }
    writer.join().unwrap();
    assert_eq!(gw.fetch_backlog().unwrap().len(), 71);
}

#[test]
fn missing_and_corrupt_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let err = open_gateway(&GatewayConfig::fixture(&missing))
        .unwrap()
        .fetch_backlog()
        .unwrap_err();
    assert!(matches!(err, GatewayError::Io { .. }), "{err:?}");

    let corrupt = dir.path().join("bad.json");
    std::fs::write(&corrupt, "{\"project_key\": ").unwrap();
    let err = open_gateway(&GatewayConfig::fixture(&corrupt))
        .unwrap()
        .fetch_backlog()
        .unwrap_err();
    assert!(matches!(err, GatewayError::FixtureParseError { .. }), "{err:?}");
}
