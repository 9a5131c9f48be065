//! Reading backlogs from, and writing confirmed actions to, an issue
//! tracker.
//!
//! A merge is never a deletion: the survivor gets the drafted text, and each
//! absorbed issue is linked to it as a duplicate, commented and closed.
//! Every step checks whether it is already satisfied first, so replaying an
//! action is safe.

mod fixture;
mod rest;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{FixtureFile, FixtureGateway, FixtureIssue, FixtureLink};
pub use rest::{adf_to_text, text_to_adf, RestAuth, RestGateway};

use crate::clock::{Clock, SystemClock};
use crate::http::{HttpTransport, UreqTransport};
use crate::model::{BacklogSnapshot, GroomingAction};

pub const DUPLICATE_LINK: &str = "Duplicate";

pub fn merged_comment(survivor: &str) -> String {
    format!("Merged into {survivor}")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("tracker rejected credentials (HTTP {status})")]
    AuthFailed { status: u16 },
    #[error("project {0} not found")]
    ProjectNotFound(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("cannot parse fixture {path}: {message}")]
    FixtureParseError { path: PathBuf, message: String },
    #[error("fixture {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected tracker response (HTTP {status}): {body}")]
    UnexpectedResponse { status: u16, body: String },
    #[error("issue {0} does not exist")]
    UnknownIssue(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("apply partially failed: {}", .receipt.failures().join("; "))]
    PartialFailure { receipt: Box<ApplyReceipt> },
    #[error("gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    UpdateText,
    LinkDuplicate,
    Comment,
    Transition,
    Create,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "message", rename_all = "snake_case")]
pub enum StepOutcome {
    Applied,
    AlreadySatisfied,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub target: String,
    pub step: StepKind,
    #[serde(flatten)]
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyReceipt {
    pub action: GroomingAction,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_key: Option<String>,
}

impl ApplyReceipt {
    pub fn new(action: GroomingAction) -> Self {
        ApplyReceipt {
            action,
            steps: Vec::new(),
            created_key: None,
        }
    }

    pub fn record(&mut self, target: &str, step: StepKind, outcome: StepOutcome) {
        self.steps.push(StepRecord {
            target: target.to_string(),
            step,
            outcome,
        });
    }

    pub fn is_success(&self) -> bool {
        self.steps
            .iter()
            .all(|s| !matches!(s.outcome, StepOutcome::Failed(_)))
    }

    pub fn failures(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter_map(|s| match &s.outcome {
                StepOutcome::Failed(m) => Some(format!("{} {:?}: {m}", s.target, s.step)),
                _ => None,
            })
            .collect()
    }

    fn into_result(self) -> Result<ApplyReceipt, GatewayError> {
        if self.is_success() {
            Ok(self)
        } else {
            Err(GatewayError::PartialFailure {
                receipt: Box::new(self),
            })
        }
    }
}

/// A tracker the grooming pipeline reads from and writes to. Applies are
/// exclusive per instance; fetches may overlap each other but not an apply.
pub trait BacklogGateway: Send + Sync {
    fn fetch_backlog(&self) -> Result<BacklogSnapshot, GatewayError>;
    fn apply_action(&self, action: &GroomingAction) -> Result<ApplyReceipt, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Rest,
    Fixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub base_url: Option<String>,
    pub project_key: Option<String>,
    pub auth: Option<RestAuth>,
    pub fixture_path: Option<PathBuf>,
    pub page_size: usize,
    pub request_timeout: std::time::Duration,
}

impl GatewayConfig {
    pub fn fixture(path: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            mode: GatewayMode::Fixture,
            base_url: None,
            project_key: None,
            auth: None,
            fixture_path: Some(path.into()),
            page_size: 50,
            request_timeout: std::time::Duration::from_secs(30),
        }
    }

    pub fn rest(base_url: impl Into<String>, project_key: impl Into<String>, auth: Option<RestAuth>) -> Self {
        GatewayConfig {
            mode: GatewayMode::Rest,
            base_url: Some(base_url.into()),
            project_key: Some(project_key.into()),
            auth,
            fixture_path: None,
            page_size: 50,
            request_timeout: std::time::Duration::from_secs(30),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.page_size == 0 {
            return Err(GatewayError::Config("page_size must be positive".into()));
        }
        match self.mode {
            GatewayMode::Fixture if self.fixture_path.is_none() => {
                Err(GatewayError::Config("fixture mode needs a fixture path".into()))
            }
            GatewayMode::Rest if self.base_url.is_none() => {
                Err(GatewayError::Config("REST mode needs a base URL".into()))
            }
            GatewayMode::Rest if self.project_key.is_none() => {
                Err(GatewayError::Config("REST mode needs a project key".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn open_gateway(config: &GatewayConfig) -> Result<Arc<dyn BacklogGateway>, GatewayError> {
    let transport = Arc::new(UreqTransport::new(config.request_timeout));
    open_gateway_with(config, transport, Arc::new(SystemClock))
}

pub fn open_gateway_with(
    config: &GatewayConfig,
    transport: Arc<dyn HttpTransport>,
    clock: Arc<dyn Clock>,
) -> Result<Arc<dyn BacklogGateway>, GatewayError> {
    config.validate()?;
    Ok(match config.mode {
        GatewayMode::Fixture => Arc::new(FixtureGateway::new(
            config.fixture_path.clone().expect("validated"),
            clock,
        )),
        GatewayMode::Rest => Arc::new(
            RestGateway::new(
                transport,
                config.base_url.clone().expect("validated"),
                config.project_key.clone().expect("validated"),
                config.auth.clone(),
                clock,
            )
            .with_page_size(config.page_size),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_requires_mode_fields() {
        assert!(GatewayConfig::fixture("x.json").validate().is_ok());
        let mut c = GatewayConfig::fixture("x.json");
        c.fixture_path = None;
        assert!(matches!(c.validate(), Err(GatewayError::Config(_))));
        let mut r = GatewayConfig::rest("http://jira", "P", None);
        assert!(r.validate().is_ok());
        r.project_key = None;
        assert!(r.validate().is_err());
    }

    #[test]
    fn receipt_serializes_flat_outcomes() {
        let mut r = ApplyReceipt::new(GroomingAction::UpdateStatus {
            key: "P-1".into(),
            status: crate::model::IssueStatus::Done,
        });
        r.record(
            "P-1",
            StepKind::Transition,
            StepOutcome::Failed("no transition".into()),
        );
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["steps"][0]["outcome"], "failed");
        assert_eq!(v["steps"][0]["message"], "no transition");
        assert!(!r.is_success());
        assert!(matches!(
            r.into_result(),
            Err(GatewayError::PartialFailure { .. })
        ));
    }
}
