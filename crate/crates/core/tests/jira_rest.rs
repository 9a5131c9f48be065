//! REST gateway against an in-memory Jira.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use backlog_groom::clock::SystemClock;
use backlog_groom::gateway::{BacklogGateway, GatewayError, RestAuth, RestGateway, StepKind, StepOutcome};
use backlog_groom::http::{Method, RetryPolicy};
use backlog_groom::model::{GroomingAction, IssueStatus};
use common::fake_jira::{FakeJira, FakeLink};

fn gateway(jira: &Arc<FakeJira>, auth: Option<RestAuth>) -> RestGateway {
    RestGateway::new(
        jira.clone(),
        "https://jira.example",
        "SHOP",
        auth,
        Arc::new(SystemClock),
    )
    .with_page_size(50)
    .with_retry(RetryPolicy::no_delay())
}

fn merge_2_into_1() -> GroomingAction {
    GroomingAction::MergeCluster {
        survivor: "SHOP-1".into(),
        absorbed: vec!["SHOP-2".into()],
        summary: "Checkout fails on mobile".into(),
        description: "Combined report.\nSecond line.".into(),
    }
}

#[test]
fn pagination_fetches_every_issue_once() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 120));
    let snapshot = gateway(&jira, None).fetch_backlog().unwrap();
    assert_eq!(snapshot.len(), 120);
    assert_eq!(snapshot.project_key, "SHOP");
    let searches = jira
        .requests()
        .iter()
        .filter(|(m, u)| *m == Method::Get && u.contains("/search"))
        .count();
    assert_eq!(searches, 3);
    let issue = snapshot.get("SHOP-7").unwrap();
    assert_eq!(issue.summary, "Issue 7");
    assert_eq!(issue.description, "Details of issue 7");
    assert_eq!(issue.status, IssueStatus::Open);
}

#[test]
fn unknown_project_is_reported() {
    let jira = Arc::new(FakeJira::with_issues("OTHER", 3));
    let err = gateway(&jira, None).fetch_backlog().unwrap_err();
    assert!(
        matches!(err, GatewayError::ProjectNotFound(ref p) if p == "SHOP"),
        "{err:?}"
    );
}

#[test]
fn merge_applies_every_step_and_replays_as_satisfied() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 5));
    let gw = gateway(&jira, None);
    let receipt = gw.apply_action(&merge_2_into_1()).unwrap();
    assert!(receipt.is_success());
    let steps: Vec<StepKind> = receipt.steps.iter().map(|s| s.step).collect();
    assert_eq!(
        steps,
        [
            StepKind::UpdateText,
            StepKind::LinkDuplicate,
            StepKind::Comment,
            StepKind::Transition
        ]
    );
    assert!(receipt.steps.iter().all(|s| s.outcome == StepOutcome::Applied));

    let survivor = jira.issue(1);
    assert_eq!(survivor.summary, "Checkout fails on mobile");
    assert_eq!(survivor.description, "Combined report.\nSecond line.");
    let absorbed = jira.issue(2);
    assert_eq!(absorbed.status, "Closed");
    assert_eq!(absorbed.comments.len(), 1);
    assert!(absorbed.comments[0].contains("SHOP-1"));
    assert_eq!(
        jira.state.lock().unwrap().links,
        [FakeLink {
            kind: "Duplicate".into(),
            inward: "SHOP-2".into(),
            outward: "SHOP-1".into()
        }]
    );

    let before = jira.mutations();
    let replay = gw.apply_action(&merge_2_into_1()).unwrap();
    assert!(
        replay
            .steps
            .iter()
            .all(|s| s.outcome == StepOutcome::AlreadySatisfied),
        "{:?}",
        replay.steps
    );
    assert_eq!(jira.mutations(), before, "replay must not write");
    assert_eq!(jira.issue(2).comments.len(), 1);
}

#[test]
fn merge_with_unknown_target_writes_nothing() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 3));
    let action = GroomingAction::MergeCluster {
        survivor: "SHOP-1".into(),
        absorbed: vec!["SHOP-99".into()],
        summary: "x".into(),
        description: String::new(),
    };
    let err = gateway(&jira, None).apply_action(&action).unwrap_err();
    assert_eq!(err, GatewayError::UnknownIssue("SHOP-99".into()));
    assert_eq!(jira.mutations(), 0);
}

#[test]
fn create_issue_returns_new_key() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 4));
    let action = GroomingAction::CreateIssue {
        summary: "Add order export".into(),
        description: "CSV export of orders".into(),
        labels: BTreeSet::from(["suggested".to_string()]),
    };
    let receipt = gateway(&jira, None).apply_action(&action).unwrap();
    assert_eq!(receipt.created_key.as_deref(), Some("SHOP-5"));
    let created = jira.issue(5);
    assert_eq!(created.summary, "Add order export");
    assert_eq!(created.description, "CSV export of orders");
    assert_eq!(created.labels, ["suggested"]);
}

#[test]
fn status_update_uses_transitions() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 2));
    let gw = gateway(&jira, None);
    let action = GroomingAction::UpdateStatus {
        key: "SHOP-2".into(),
        status: IssueStatus::Done,
    };
    assert!(gw.apply_action(&action).unwrap().is_success());
    assert_eq!(jira.issue(2).status, "Done");
    let again = gw.apply_action(&action).unwrap();
    assert_eq!(again.steps[0].outcome, StepOutcome::AlreadySatisfied);
}

#[test]
fn rate_limit_is_retried_then_reported() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 3));
    jira.state.lock().unwrap().throttle = 2;
    assert_eq!(gateway(&jira, None).fetch_backlog().unwrap().len(), 3);

    jira.state.lock().unwrap().throttle = 3;
    let err = gateway(&jira, None).fetch_backlog().unwrap_err();
    assert_eq!(err, GatewayError::RateLimited { attempts: 3 });
}

#[test]
fn server_errors_fail_the_step_not_the_batch_silently() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 3));
    jira.state.lock().unwrap().fail_path = Some("comment".into());
    let err = gateway(&jira, None).apply_action(&merge_2_into_1()).unwrap_err();
    let GatewayError::PartialFailure { receipt } = err else {
        panic!("expected partial failure, got {err:?}");
    };
    let failed: Vec<StepKind> = receipt
        .steps
        .iter()
        .filter(|s| matches!(s.outcome, StepOutcome::Failed(_)))
        .map(|s| s.step)
        .collect();
    assert_eq!(failed, [StepKind::Comment]);
}

#[test]
fn credentials_are_sent_and_rejections_surface() {
    let jira = Arc::new(FakeJira::with_issues("SHOP", 2));
    // "ana:secret" in base64
    jira.state.lock().unwrap().auth = Some("Basic YW5hOnNlY3JldA==".into());
    let basic = RestAuth::Basic {
        user: "ana".into(),
        token: "secret".into(),
    };
    assert_eq!(gateway(&jira, Some(basic)).fetch_backlog().unwrap().len(), 2);

    let err = gateway(&jira, Some(RestAuth::Bearer("wrong".into())))
        .fetch_backlog()
        .unwrap_err();
    assert_eq!(err, GatewayError::AuthFailed { status: 401 });
    let err = gateway(&jira, None).fetch_backlog().unwrap_err();
    assert_eq!(err, GatewayError::AuthFailed { status: 401 });
}
