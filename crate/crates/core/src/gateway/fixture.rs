//! Local JSON file standing in for a tracker project.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    merged_comment, ApplyReceipt, BacklogGateway, GatewayError, StepKind, StepOutcome, DUPLICATE_LINK,
};
use crate::clock::Clock;
use crate::model::{BacklogSnapshot, GroomingAction, Issue, IssueStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureLink {
    #[serde(rename = "type")]
    pub kind: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureIssue {
    pub key: String,
    pub summary: String,
    #[serde(default)]
    pub description: String,
    pub status: IssueStatus,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default)]
    pub comments: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<FixtureLink>,
}

impl FixtureIssue {
    fn to_issue(&self) -> Issue {
        Issue {
            key: self.key.clone(),
            summary: self.summary.clone(),
            description: self.description.clone(),
            status: self.status,
            labels: self.labels.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    fn has_link(&self, kind: &str, target: &str) -> bool {
        self.links.iter().any(|l| l.kind == kind && l.target == target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub project_key: String,
    pub issues: Vec<FixtureIssue>,
}

impl FixtureFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| GatewayError::FixtureParseError {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Replaces `path` atomically: the new content goes to a temporary file
    /// in the same directory, which is then renamed over the original.
    pub fn save_atomic(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let io_err = |e: std::io::Error| GatewayError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        let mut text = serde_json::to_string_pretty(self).expect("fixture serializes");
        text.push('\n');
        tmp.write_all(text.as_bytes()).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    pub fn issue(&self, key: &str) -> Option<&FixtureIssue> {
        self.issues.iter().find(|i| i.key == key)
    }

    fn issue_mut(&mut self, key: &str) -> Result<&mut FixtureIssue, GatewayError> {
        self.issues
            .iter_mut()
            .find(|i| i.key == key)
            .ok_or_else(|| GatewayError::UnknownIssue(key.to_string()))
    }

    /// Project prefix plus one more than the largest numeric suffix in use.
    pub fn next_key(&self) -> String {
        let prefix = format!("{}-", self.project_key);
        let max = self
            .issues
            .iter()
            .filter_map(|i| i.key.strip_prefix(&prefix)?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        format!("{prefix}{}", max + 1)
    }
}

pub struct FixtureGateway {
    path: PathBuf,
    clock: Arc<dyn Clock>,
    lock: RwLock<()>,
}

impl FixtureGateway {
    pub fn new(path: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Self {
        FixtureGateway {
            path: path.into(),
            clock,
            lock: RwLock::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn apply_to(
        &self,
        file: &mut FixtureFile,
        action: &GroomingAction,
    ) -> Result<ApplyReceipt, GatewayError> {
        let now = self.clock.now();
        let mut receipt = ApplyReceipt::new(action.clone());
        for key in action.targets() {
            if file.issue(key).is_none() {
                return Err(GatewayError::UnknownIssue(key.to_string()));
            }
        }
        match action {
            GroomingAction::MergeCluster {
                survivor,
                absorbed,
                summary,
                description,
            } => {
                let s = file.issue_mut(survivor)?;
                if s.summary == *summary && s.description == *description {
                    receipt.record(survivor, StepKind::UpdateText, StepOutcome::AlreadySatisfied);
                } else {
                    s.summary = summary.clone();
                    s.description = description.clone();
                    s.updated_at = now;
                    receipt.record(survivor, StepKind::UpdateText, StepOutcome::Applied);
                }
                for key in absorbed {
                    let issue = file.issue_mut(key)?;
                    let mut changed = false;
                    if issue.has_link(DUPLICATE_LINK, survivor) {
                        receipt.record(key, StepKind::LinkDuplicate, StepOutcome::AlreadySatisfied);
                    } else {
                        issue.links.push(FixtureLink {
                            kind: DUPLICATE_LINK.to_string(),
                            target: survivor.clone(),
                        });
                        changed = true;
                        receipt.record(key, StepKind::LinkDuplicate, StepOutcome::Applied);
                    }
                    let comment = merged_comment(survivor);
                    if issue.comments.contains(&comment) {
                        receipt.record(key, StepKind::Comment, StepOutcome::AlreadySatisfied);
                    } else {
                        issue.comments.push(comment);
                        changed = true;
                        receipt.record(key, StepKind::Comment, StepOutcome::Applied);
                    }
                    if issue.status == IssueStatus::Closed {
                        receipt.record(key, StepKind::Transition, StepOutcome::AlreadySatisfied);
                    } else {
                        issue.status = IssueStatus::Closed;
                        changed = true;
                        receipt.record(key, StepKind::Transition, StepOutcome::Applied);
                    }
                    if changed {
                        issue.updated_at = now;
                    }
                }
            }
            GroomingAction::CreateIssue {
                summary,
                description,
                labels,
            } => {
                let key = file.next_key();
                file.issues.push(FixtureIssue {
                    key: key.clone(),
                    summary: summary.clone(),
                    description: description.clone(),
                    status: IssueStatus::Open,
                    labels: labels.clone(),
                    created_at: now,
                    updated_at: now,
                    comments: Vec::new(),
                    links: Vec::new(),
                });
                receipt.record(&key, StepKind::Create, StepOutcome::Applied);
                receipt.created_key = Some(key);
            }
            GroomingAction::UpdateStatus { key, status } => {
                let issue = file.issue_mut(key)?;
                if issue.status == *status {
                    receipt.record(key, StepKind::Transition, StepOutcome::AlreadySatisfied);
                } else {
                    issue.status = *status;
                    issue.updated_at = now;
                    receipt.record(key, StepKind::Transition, StepOutcome::Applied);
                }
            }
        }
        Ok(receipt)
    }
}

impl BacklogGateway for FixtureGateway {
    fn fetch_backlog(&self) -> Result<BacklogSnapshot, GatewayError> {
        let _guard = self.lock.read().expect("fixture lock poisoned");
        let file = FixtureFile::load(&self.path)?;
        let issues = file.issues.iter().map(FixtureIssue::to_issue).collect();
        BacklogSnapshot::new(file.project_key, issues, self.clock.now()).map_err(|e| {
            GatewayError::FixtureParseError {
                path: self.path.clone(),
                message: e.to_string(),
            }
        })
    }

    fn apply_action(&self, action: &GroomingAction) -> Result<ApplyReceipt, GatewayError> {
        action
            .validate()
            .map_err(|e| GatewayError::InvalidAction(e.to_string()))?;
        let _guard = self.lock.write().expect("fixture lock poisoned");
        let mut file = FixtureFile::load(&self.path)?;
        let receipt = self.apply_to(&mut file, action)?;
        if receipt.steps.iter().any(|s| s.outcome == StepOutcome::Applied) {
            file.save_atomic(&self.path)?;
        }
        receipt.into_result()
    }
}
