//! Grooming sessions: scan results, human decisions and the apply step.
//!
//! Nothing reaches the tracker unless it carries an Accept or Modify
//! decision (Auto mode records that acceptance on the user's behalf when the
//! session starts).

mod api;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use api::router;

use crate::clock::Clock;
use crate::dedup::{
    cluster, detect_duplicates, propose_resolution_with_fallback, DedupError, DuplicateCandidate,
    DuplicateCluster, EngineConfig, MergeDrafter, ReviewStatus,
};
use crate::embedding::Embedder;
use crate::eval::{
    cluster_pairs, metrics, score, ConfusionMatrix, EvalError, GroundTruth, MetricsReport, ReportRow,
};
use crate::gateway::{ApplyReceipt, BacklogGateway, GatewayError};
use crate::model::{BacklogSnapshot, GroomingAction, IssuePair};
use crate::suggest::{IssueSuggestion, SuggestError, Suggester, SuggestionRequest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReviewError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("no candidate or suggestion {0} in this session")]
    UnknownTarget(String),
    #[error("Modify needs an edited summary")]
    MissingEditedPayload,
    #[error("session {0} has already been applied")]
    SessionAlreadyApplied(String),
    #[error("nothing has been accepted, so there is nothing to apply")]
    NothingToApply,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Dedup(#[from] DedupError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Suggest(#[from] SuggestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("apply failed for {} action(s); the session stays open for a retry", .failed.len())]
    PartialFailure {
        receipts: Vec<ApplyReceipt>,
        failed: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    #[default]
    Interactive,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
    Modify,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditedPayload {
    pub summary: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub target: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_payload: Option<EditedPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
}

impl Decision {
    pub fn accept(target: impl Into<String>) -> Self {
        Decision {
            target: target.into(),
            verdict: Verdict::Accept,
            edited_payload: None,
            actor: None,
        }
    }

    pub fn reject(target: impl Into<String>) -> Self {
        Decision {
            verdict: Verdict::Reject,
            ..Decision::accept(target)
        }
    }

    pub fn modify(
        target: impl Into<String>,
        summary: impl Into<String>,
        description: impl Into<String>,
    ) -> Self {
        Decision {
            verdict: Verdict::Modify,
            edited_payload: Some(EditedPayload {
                summary: summary.into(),
                description: description.into(),
            }),
            ..Decision::accept(target)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub at: DateTime<Utc>,
    pub actor: String,
    pub target: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_payload: Option<EditedPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub id: String,
    #[serde(flatten)]
    pub candidate: DuplicateCandidate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited: Option<EditedPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionEntry {
    pub id: String,
    #[serde(flatten)]
    pub suggestion: IssueSuggestion,
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited: Option<EditedPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSession {
    pub session_id: String,
    pub mode: SessionMode,
    pub threshold: f64,
    pub snapshot: BacklogSnapshot,
    pub candidates: Vec<CandidateEntry>,
    pub suggestions: Vec<SuggestionEntry>,
    pub decision_log: Vec<LogEntry>,
    pub started_at: DateTime<Utc>,
    pub applied_at: Option<DateTime<Utc>>,
    /// Receipts of actions that went through, kept across failed attempts
    /// so a retry does not repeat them.
    pub receipts: Vec<ApplyReceipt>,
}

impl ReviewSession {
    pub fn is_applied(&self) -> bool {
        self.applied_at.is_some()
    }

    fn confirmed_candidates(&self) -> Vec<DuplicateCandidate> {
        self.candidates
            .iter()
            .filter(|c| c.candidate.status.is_confirmed())
            .map(|c| c.candidate.clone())
            .collect()
    }

    fn has_confirmed_items(&self) -> bool {
        self.candidates.iter().any(|c| c.candidate.status.is_confirmed())
            || self.suggestions.iter().any(|s| s.status.is_confirmed())
    }

    /// Clusters over the confirmed candidates.
    pub fn confirmed_clusters(&self, engine: &EngineConfig) -> Result<Vec<DuplicateCluster>, DedupError> {
        cluster(&self.confirmed_candidates(), &self.snapshot, engine.survivor_rule)
    }

    /// Predicted duplicate pairs: every pair inside a confirmed cluster.
    pub fn predicted_pairs(&self, engine: &EngineConfig) -> Result<BTreeSet<IssuePair>, DedupError> {
        Ok(cluster_pairs(&self.confirmed_clusters(engine)?))
    }

    /// The actions apply would send, in order: merges (one per cluster, in
    /// cluster order) followed by new issues (in suggestion order).
    ///
    /// A cluster containing a Modified candidate uses that candidate's
    /// edited text verbatim (the first such candidate in scan order). A
    /// cluster that is exactly one candidate reuses the text drafted at scan
    /// time. Anything else is drafted now.
    pub fn plan_actions(
        &self,
        engine: &EngineConfig,
        drafter: &dyn MergeDrafter,
    ) -> Result<Vec<GroomingAction>, ReviewError> {
        let mut actions = Vec::new();
        for cluster in self.confirmed_clusters(engine)? {
            let inside: Vec<&CandidateEntry> = self
                .candidates
                .iter()
                .filter(|c| {
                    c.candidate.status.is_confirmed() && cluster.members.contains(c.candidate.pair.a())
                })
                .collect();
            let edited = inside
                .iter()
                .find(|c| c.candidate.status == ReviewStatus::Modified)
                .and_then(|c| c.edited.clone());
            let action = if let Some(edit) = edited {
                GroomingAction::MergeCluster {
                    survivor: cluster.survivor.clone(),
                    absorbed: cluster.absorbed(),
                    summary: edit.summary,
                    description: edit.description,
                }
            } else {
                match (inside.as_slice(), cluster.members.len()) {
                    ([only], 2) if only.candidate.proposed_action.is_some() => {
                        only.candidate.proposed_action.clone().expect("checked")
                    }
                    _ => propose_resolution_with_fallback(&cluster, &self.snapshot, drafter)?,
                }
            };
            actions.push(action);
        }
        for entry in self.suggestions.iter().filter(|s| s.status.is_confirmed()) {
            let (summary, description) = match &entry.edited {
                Some(edit) if entry.status == ReviewStatus::Modified => {
                    (edit.summary.clone(), edit.description.clone())
                }
                _ => (
                    entry.suggestion.summary.clone(),
                    entry.suggestion.description.clone(),
                ),
            };
            actions.push(GroomingAction::CreateIssue {
                summary,
                description,
                labels: BTreeSet::new(),
            });
        }
        Ok(actions)
    }
}

/// Session list entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub mode: SessionMode,
    pub threshold: f64,
    pub issue_count: usize,
    pub candidate_count: usize,
    pub suggestion_count: usize,
    pub started_at: DateTime<Utc>,
    pub applied_at: Option<DateTime<Utc>>,
}

impl From<&ReviewSession> for SessionSummary {
    fn from(s: &ReviewSession) -> Self {
        SessionSummary {
            session_id: s.session_id.clone(),
            mode: s.mode,
            threshold: s.threshold,
            issue_count: s.snapshot.len(),
            candidate_count: s.candidates.len(),
            suggestion_count: s.suggestions.len(),
            started_at: s.started_at,
            applied_at: s.applied_at,
        }
    }
}

/// Table row for a candidate: both issues side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub id: String,
    pub issue_a: String,
    pub summary_a: String,
    pub issue_b: String,
    pub summary_b: String,
    pub score: f64,
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_action: Option<GroomingAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited: Option<EditedPayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub session_id: String,
    pub mode: SessionMode,
    pub applied: bool,
    pub started_at: DateTime<Utc>,
    pub applied_at: Option<DateTime<Utc>>,
    /// Time to completion (`applied_at - started_at`), or elapsed time so
    /// far while the session is open.
    pub time_seconds: f64,
    pub decisions: usize,
    pub predicted_pairs: Vec<IssuePair>,
    pub receipts: Vec<ApplyReceipt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<ReportRow>,
}

pub struct ReviewService {
    gateway: Arc<dyn BacklogGateway>,
    embedder: Arc<Embedder>,
    suggester: Arc<Suggester>,
    engine: EngineConfig,
    clock: Arc<dyn Clock>,
    project_description: String,
    truth: Option<GroundTruth>,
    sessions: Mutex<BTreeMap<u64, Arc<Mutex<ReviewSession>>>>,
    next_id: AtomicU64,
}

const DEFAULT_ACTOR: &str = "user";
pub const DEFAULT_MAX_SUGGESTIONS: usize = 5;

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl ReviewService {
    pub fn new(
        gateway: Arc<dyn BacklogGateway>,
        embedder: Arc<Embedder>,
        suggester: Arc<Suggester>,
        engine: EngineConfig,
        clock: Arc<dyn Clock>,
    ) -> Self {
        ReviewService {
            gateway,
            embedder,
            suggester,
            engine,
            clock,
            project_description: String::new(),
            truth: None,
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_project_description(mut self, description: impl Into<String>) -> Self {
        self.project_description = description.into();
        self
    }

    /// Ground truth to score sessions against in reports.
    pub fn with_ground_truth(mut self, truth: Option<GroundTruth>) -> Self {
        self.truth = truth;
        self
    }

    pub fn engine(&self) -> &EngineConfig {
        &self.engine
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<ReviewSession>>, ReviewError> {
        let unknown = || ReviewError::UnknownSession(id.to_string());
        let n = session_number(id).ok_or_else(unknown)?;
        self.sessions
            .lock()
            .expect("session table poisoned")
            .get(&n)
            .cloned()
            .ok_or_else(unknown)
    }

    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut ReviewSession) -> Result<T, ReviewError>,
    ) -> Result<T, ReviewError> {
        let handle = self.session(id)?;
        let mut guard = handle.lock().expect("session poisoned");
        f(&mut guard)
    }

    /// Fetches the backlog, scans it and stores the candidates. Nothing is
    /// registered if any step fails.
    pub fn start_session(
        &self,
        mode: SessionMode,
        threshold: Option<f64>,
    ) -> Result<ReviewSession, ReviewError> {
        let started_at = self.clock.now();
        let mut engine = self.engine;
        if let Some(t) = threshold {
            engine.duplicate_threshold = t;
        }
        engine.validate()?;
        let snapshot = self.gateway.fetch_backlog()?;
        let found = detect_duplicates(&snapshot, &self.embedder, &engine)?;
        let mut candidates = Vec::with_capacity(found.len());
        for (i, mut candidate) in found.into_iter().enumerate() {
            let pair_cluster = cluster(std::slice::from_ref(&candidate), &snapshot, engine.survivor_rule)?;
            candidate.proposed_action = Some(propose_resolution_with_fallback(
                &pair_cluster[0],
                &snapshot,
                self.suggester.as_ref(),
            )?);
            if mode == SessionMode::Auto {
                candidate.status = ReviewStatus::Accepted;
            }
            candidates.push(CandidateEntry {
                id: format!("c{}", i + 1),
                candidate,
                edited: None,
            });
        }
        let n = self.next_id.fetch_add(1, Ordering::SeqCst);
        let session = ReviewSession {
            session_id: format!("s{n}"),
            mode,
            threshold: engine.duplicate_threshold,
            snapshot,
            candidates,
            suggestions: Vec::new(),
            decision_log: Vec::new(),
            started_at,
            applied_at: None,
            receipts: Vec::new(),
        };
        self.sessions
            .lock()
            .expect("session table poisoned")
            .insert(n, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn list_sessions(&self) -> Vec<SessionSummary> {
        let handles: Vec<_> = self
            .sessions
            .lock()
            .expect("session table poisoned")
            .values()
            .cloned()
            .collect();
        handles
            .iter()
            .map(|h| SessionSummary::from(&*h.lock().expect("session poisoned")))
            .collect()
    }

    pub fn get_session(&self, id: &str) -> Result<ReviewSession, ReviewError> {
        self.with_session(id, |s| Ok(s.clone()))
    }

    /// Candidate rows in scan order (score descending).
    pub fn candidate_rows(&self, id: &str) -> Result<Vec<CandidateRow>, ReviewError> {
        self.with_session(id, |s| {
            Ok(s.candidates
                .iter()
                .map(|c| {
                    let summary = |k: &str| s.snapshot.get(k).map(|i| i.summary.clone()).unwrap_or_default();
                    CandidateRow {
                        id: c.id.clone(),
                        issue_a: c.candidate.pair.a().to_string(),
                        summary_a: summary(c.candidate.pair.a()),
                        issue_b: c.candidate.pair.b().to_string(),
                        summary_b: summary(c.candidate.pair.b()),
                        score: c.candidate.score,
                        status: c.candidate.status,
                        proposed_action: c.candidate.proposed_action.clone(),
                        edited: c.edited.clone(),
                    }
                })
                .collect())
        })
    }

    /// Records a verdict; the last decision on a target wins. Returns the
    /// target's new status.
    pub fn record_decision(&self, id: &str, decision: Decision) -> Result<ReviewStatus, ReviewError> {
        self.with_session(id, |s| {
            if s.is_applied() {
                return Err(ReviewError::SessionAlreadyApplied(s.session_id.clone()));
            }
            let edited = match decision.verdict {
                Verdict::Modify => match &decision.edited_payload {
                    Some(p) if !p.summary.trim().is_empty() => Some(p.clone()),
                    _ => return Err(ReviewError::MissingEditedPayload),
                },
                _ => None,
            };
            let status = match decision.verdict {
                Verdict::Accept => ReviewStatus::Accepted,
                Verdict::Reject => ReviewStatus::Rejected,
                Verdict::Modify => ReviewStatus::Modified,
            };
            if let Some(c) = s.candidates.iter_mut().find(|c| c.id == decision.target) {
                c.candidate.status = status;
                c.edited = edited.clone();
            } else if let Some(g) = s.suggestions.iter_mut().find(|g| g.id == decision.target) {
                g.status = status;
                g.edited = edited.clone();
            } else {
                return Err(ReviewError::UnknownTarget(decision.target.clone()));
            }
            // The log must not run backwards even if the wall clock does.
            let mut at = self.clock.now();
            if let Some(last) = s.decision_log.last() {
                at = at.max(last.at);
            }
            s.decision_log.push(LogEntry {
                at,
                actor: decision
                    .actor
                    .clone()
                    .unwrap_or_else(|| DEFAULT_ACTOR.to_string()),
                target: decision.target.clone(),
                verdict: decision.verdict,
                edited_payload: edited,
            });
            Ok(status)
        })
    }

    /// Asks for new-issue suggestions and appends the non-redundant ones as
    /// Proposed. On failure the session is unchanged.
    pub fn request_suggestions(
        &self,
        id: &str,
        user_prompt: Option<String>,
        max_suggestions: Option<usize>,
    ) -> Result<Vec<SuggestionEntry>, ReviewError> {
        self.with_session(id, |s| {
            if s.is_applied() {
                return Err(ReviewError::SessionAlreadyApplied(s.session_id.clone()));
            }
            let request = SuggestionRequest::for_snapshot(
                &s.snapshot,
                self.project_description.clone(),
                user_prompt,
                max_suggestions.unwrap_or(DEFAULT_MAX_SUGGESTIONS),
            );
            let fresh =
                self.suggester
                    .suggest_new_issues(&request, &s.snapshot, &self.embedder, &self.engine)?;
            let start = s.suggestions.len();
            s.suggestions.extend(
                fresh
                    .into_iter()
                    .enumerate()
                    .map(|(i, suggestion)| SuggestionEntry {
                        id: format!("g{}", start + i + 1),
                        suggestion,
                        status: ReviewStatus::Proposed,
                        edited: None,
                    }),
            );
            Ok(s.suggestions.clone())
        })
    }

    /// Sends every confirmed item to the tracker. Actions that succeeded on
    /// an earlier, partially failed attempt are not sent again. The session
    /// becomes read-only only when everything succeeded.
    pub fn apply_session(&self, id: &str) -> Result<SessionReport, ReviewError> {
        self.with_session(id, |s| {
            if s.is_applied() {
                return Err(ReviewError::SessionAlreadyApplied(s.session_id.clone()));
            }
            if !s.has_confirmed_items() {
                return Err(ReviewError::NothingToApply);
            }
            let actions = s.plan_actions(&self.engine, self.suggester.as_ref())?;
            let mut failed = Vec::new();
            let mut attempt_receipts = Vec::new();
            for action in actions {
                if s.receipts.iter().any(|r| r.action == action) {
                    continue;
                }
                match self.gateway.apply_action(&action) {
                    Ok(receipt) => s.receipts.push(receipt),
                    Err(GatewayError::PartialFailure { receipt }) => {
                        failed.push(receipt.failures().join("; "));
                        attempt_receipts.push(*receipt);
                    }
                    Err(e) => failed.push(e.to_string()),
                }
            }
            if !failed.is_empty() {
                let mut receipts = s.receipts.clone();
                receipts.extend(attempt_receipts);
                return Err(ReviewError::PartialFailure { receipts, failed });
            }
            let now = self.clock.now();
            s.applied_at = Some(now.max(s.started_at));
            self.report_for(s)
        })
    }

    pub fn report(&self, id: &str) -> Result<SessionReport, ReviewError> {
        self.with_session(id, |s| self.report_for(s))
    }

    fn report_for(&self, s: &ReviewSession) -> Result<SessionReport, ReviewError> {
        let end = s.applied_at.unwrap_or_else(|| self.clock.now().max(s.started_at));
        let time_seconds = (end - s.started_at).num_milliseconds() as f64 / 1000.0;
        let predicted = s.predicted_pairs(&self.engine)?;
        let (confusion, metrics_report, row) = match &self.truth {
            Some(truth) => {
                let cm = score(&predicted, truth)?;
                let m = metrics(&cm, time_seconds);
                let label = match s.mode {
                    SessionMode::Auto => "Auto",
                    SessionMode::Interactive => "Interactive",
                };
                let row = ReportRow::new(format!("{} {label}", s.session_id), &cm, &m);
                (Some(cm), Some(m), Some(row))
            }
            None => (None, None, None),
        };
        Ok(SessionReport {
            session_id: s.session_id.clone(),
            mode: s.mode,
            applied: s.is_applied(),
            started_at: s.started_at,
            applied_at: s.applied_at,
            time_seconds,
            decisions: s.decision_log.len(),
            predicted_pairs: predicted.into_iter().collect(),
            receipts: s.receipts.clone(),
            confusion,
            metrics: metrics_report,
            row,
        })
    }
}
