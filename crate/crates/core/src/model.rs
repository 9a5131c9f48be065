//! Domain types shared by every stage of the grooming pipeline.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("pair members must differ, got {0:?} twice")]
    IdenticalKeys(String),
    #[error("issue key must not be empty")]
    EmptyKey,
    #[error("issue {0} has an empty summary")]
    EmptySummary(String),
    #[error("issue {0} was updated before it was created")]
    TimestampOrder(String),
    #[error("duplicate issue key {0} in snapshot")]
    DuplicateKey(String),
    #[error("invalid grooming action: {0}")]
    InvalidAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IssueStatus {
    #[serde(alias = "To Do", alias = "open")]
    Open,
    #[serde(alias = "In Progress", alias = "in_progress")]
    InProgress,
    #[serde(alias = "done")]
    Done,
    #[serde(alias = "closed")]
    Closed,
}

impl IssueStatus {
    /// Maps a tracker status name onto the closest known status.
    pub fn from_tracker_name(name: &str) -> IssueStatus {
        match name.trim().to_ascii_lowercase().as_str() {
            "in progress" | "inprogress" | "in review" => IssueStatus::InProgress,
            "done" | "resolved" => IssueStatus::Done,
            "closed" => IssueStatus::Closed,
            _ => IssueStatus::Open,
        }
    }

    pub fn tracker_name(self) -> &'static str {
        match self {
            IssueStatus::Open => "Open",
            IssueStatus::InProgress => "In Progress",
            IssueStatus::Done => "Done",
            IssueStatus::Closed => "Closed",
        }
    }
}

impl fmt::Display for IssueStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tracker_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub key: String,
    pub summary: String,
    #[serde(default)]
    pub description: String,
    pub status: IssueStatus,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Issue {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.key.is_empty() {
            return Err(ModelError::EmptyKey);
        }
        if self.summary.trim().is_empty() {
            return Err(ModelError::EmptySummary(self.key.clone()));
        }
        if self.created_at > self.updated_at {
            return Err(ModelError::TimestampOrder(self.key.clone()));
        }
        Ok(())
    }
}

/// The text that represents an issue for embedding: summary, then the
/// description on its own line when there is one.
pub fn issue_text(issue: &Issue) -> String {
    text_of(&issue.summary, &issue.description)
}

pub(crate) fn text_of(summary: &str, description: &str) -> String {
    if description.is_empty() {
        summary.to_string()
    } else {
        format!("{summary}\n{description}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacklogSnapshot {
    pub project_key: String,
    pub issues: Vec<Issue>,
    pub fetched_at: DateTime<Utc>,
}

impl BacklogSnapshot {
    /// Validates every issue, rejects duplicate keys and sorts by key.
    pub fn new(
        project_key: impl Into<String>,
        mut issues: Vec<Issue>,
        fetched_at: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        let mut seen = HashSet::with_capacity(issues.len());
        for issue in &issues {
            issue.validate()?;
            if !seen.insert(issue.key.as_str()) {
                return Err(ModelError::DuplicateKey(issue.key.clone()));
            }
        }
        issues.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(BacklogSnapshot {
            project_key: project_key.into(),
            issues,
            fetched_at,
        })
    }

    pub fn get(&self, key: &str) -> Option<&Issue> {
        self.issues
            .binary_search_by(|i| i.key.as_str().cmp(key))
            .ok()
            .map(|idx| &self.issues[idx])
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// Every canonical pair over the snapshot, n(n-1)/2 of them.
    pub fn all_pairs(&self) -> impl Iterator<Item = IssuePair> + '_ {
        self.issues.iter().enumerate().flat_map(move |(i, a)| {
            self.issues[i + 1..].iter().map(move |b| IssuePair {
                a: a.key.clone(),
                b: b.key.clone(),
            })
        })
    }
}

/// Unordered pair of issue keys, stored with the lexicographically smaller
/// key (by code point) first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IssuePair {
    a: String,
    b: String,
}

impl IssuePair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Result<Self, ModelError> {
        canonicalize_pair(a, b)
    }

    pub fn a(&self) -> &str {
        &self.a
    }

    pub fn b(&self) -> &str {
        &self.b
    }

    pub fn contains(&self, key: &str) -> bool {
        self.a == key || self.b == key
    }
}

pub fn canonicalize_pair(a: impl Into<String>, b: impl Into<String>) -> Result<IssuePair, ModelError> {
    let (a, b) = (a.into(), b.into());
    match a.cmp(&b) {
        std::cmp::Ordering::Less => Ok(IssuePair { a, b }),
        std::cmp::Ordering::Greater => Ok(IssuePair { a: b, b: a }),
        std::cmp::Ordering::Equal => Err(ModelError::IdenticalKeys(a)),
    }
}

impl<'de> Deserialize<'de> for IssuePair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            a: String,
            b: String,
        }
        let raw = Raw::deserialize(d)?;
        canonicalize_pair(raw.a, raw.b).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for IssuePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}~{}", self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroomingAction {
    MergeCluster {
        survivor: String,
        absorbed: Vec<String>,
        summary: String,
        description: String,
    },
    CreateIssue {
        summary: String,
        description: String,
        #[serde(default)]
        labels: BTreeSet<String>,
    },
    UpdateStatus {
        key: String,
        status: IssueStatus,
    },
}

impl GroomingAction {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            GroomingAction::MergeCluster {
                survivor,
                absorbed,
                summary,
                ..
            } => {
                if absorbed.is_empty() {
                    return Err(ModelError::InvalidAction("merge absorbs no issues".into()));
                }
                if absorbed.iter().any(|k| k == survivor) {
                    return Err(ModelError::InvalidAction(format!(
                        "survivor {survivor} is also absorbed"
                    )));
                }
                if summary.trim().is_empty() {
                    return Err(ModelError::InvalidAction("merge summary is empty".into()));
                }
                Ok(())
            }
            GroomingAction::CreateIssue { summary, .. } => {
                if summary.trim().is_empty() {
                    Err(ModelError::InvalidAction("new issue summary is empty".into()))
                } else {
                    Ok(())
                }
            }
            GroomingAction::UpdateStatus { key, .. } => {
                if key.is_empty() {
                    Err(ModelError::EmptyKey)
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Keys of existing issues the action mutates.
    pub fn targets(&self) -> Vec<&str> {
        match self {
            GroomingAction::MergeCluster {
                survivor, absorbed, ..
            } => std::iter::once(survivor.as_str())
                .chain(absorbed.iter().map(String::as_str))
                .collect(),
            GroomingAction::CreateIssue { .. } => Vec::new(),
            GroomingAction::UpdateStatus { key, .. } => vec![key.as_str()],
        }
    }
}

#[cfg(test)]
pub(crate) use tests::issue as test_issue;
