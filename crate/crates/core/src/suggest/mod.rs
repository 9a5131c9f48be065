//! Chat-model backed drafting of merged issue text and new backlog items.
//!
//! Every model reply must be a bare JSON value. A reply that fails to parse
//! gets exactly one reformat request echoing the parse error; a second
//! failure is returned as [`SuggestError::MalformedModelOutput`].

mod parse;
mod prompt;
mod provider;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_merge_output, parse_model_output};
pub use prompt::{render, PromptTemplates};
pub use provider::{
    ChatProvider, ChatProviderConfig, ChatProviderKind, ChatRequest, ChatTask, MockChatProvider,
    RemoteChatProvider,
};

use crate::dedup::{DedupError, EngineConfig, MergeDrafter};
use crate::embedding::{EmbedError, Embedder};
use crate::index::cosine;
use crate::model::{issue_text, text_of, BacklogSnapshot, Issue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuggestError {
    #[error("chat provider failed after {attempts} attempt(s) (status {status:?}): {message}")]
    Provider {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("model output rejected{}: {reason}", at.as_ref().map(|a| format!(" at {a}")).unwrap_or_default())]
    MalformedModelOutput { at: Option<String>, reason: String },
    #[error("embedding suggestions: {0}")]
    Embedding(#[from] EmbedError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("chat configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRequest {
    pub project_description: String,
    pub issue_digest: Vec<(String, String)>,
    #[serde(default)]
    pub user_prompt: Option<String>,
    pub max_suggestions: usize,
}

impl SuggestionRequest {
    pub fn for_snapshot(
        snapshot: &BacklogSnapshot,
        project_description: impl Into<String>,
        user_prompt: Option<String>,
        max_suggestions: usize,
    ) -> Self {
        SuggestionRequest {
            project_description: project_description.into(),
            issue_digest: snapshot
                .issues
                .iter()
                .map(|i| (i.key.clone(), i.summary.clone()))
                .collect(),
            user_prompt: user_prompt.filter(|p| !p.trim().is_empty()),
            max_suggestions,
        }
    }

    fn validate(&self) -> Result<(), SuggestError> {
        if self.max_suggestions == 0 {
            return Err(SuggestError::InvalidRequest(
                "max_suggestions must be positive".into(),
            ));
        }
        let mut seen = HashSet::new();
        for (key, _) in &self.issue_digest {
            if !seen.insert(key) {
                return Err(SuggestError::InvalidRequest(format!(
                    "duplicate digest key {key}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueSuggestion {
    pub summary: String,
    pub description: String,
    pub rationale: String,
    /// Highest cosine against the existing backlog; set by the redundancy
    /// filter.
    pub redundancy_score: Option<f64>,
}

impl IssueSuggestion {
    pub fn text(&self) -> String {
        text_of(&self.summary, &self.description)
    }
}

pub struct Suggester {
    provider: Arc<dyn ChatProvider>,
    templates: PromptTemplates,
}

impl Suggester {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Suggester {
            provider,
            templates: PromptTemplates::default(),
        }
    }

    pub fn mock() -> Self {
        Suggester::new(Arc::new(MockChatProvider::new()))
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    /// Sends `request`, parsing the reply with `parse`; a parse failure is
    /// retried once with a reformat prompt.
    fn ask<T>(
        &self,
        request: ChatRequest,
        parse: impl Fn(&str) -> Result<T, SuggestError>,
    ) -> Result<T, SuggestError> {
        let reply = self.provider.complete(&request)?;
        let err = match parse(&reply) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        log::info!("model reply rejected ({err}); asking once for a reformat");
        let vars: HashMap<&str, String> = [
            ("error", err.to_string()),
            ("previous_output", reply),
            ("original_prompt", request.prompt.clone()),
        ]
        .into_iter()
        .collect();
        let retry = ChatRequest {
            task: request.task,
            prompt: render(&self.templates.reformat, &vars),
            reformat_attempt: true,
        };
        parse(&self.provider.complete(&retry)?)
    }

    /// Drafts one summary and description covering all `issues`.
    pub fn draft_merge_text(&self, issues: &[Issue]) -> Result<(String, String), SuggestError> {
        if issues.is_empty() {
            return Err(SuggestError::InvalidRequest("no issues to merge".into()));
        }
        let mut sorted = issues.to_vec();
        sorted.sort_by(|a, b| a.key.cmp(&b.key));
        let listing = sorted
            .iter()
            .map(|i| format!("[{}] {}\n{}", i.key, i.summary, i.description))
            .collect::<Vec<_>>()
            .join("\n\n");
        let vars: HashMap<&str, String> = [("issues", listing)].into_iter().collect();
        let request = ChatRequest {
            prompt: render(&self.templates.draft_merge, &vars),
            task: ChatTask::DraftMerge { issues: sorted },
            reformat_attempt: false,
        };
        self.ask(request, parse_merge_output)
    }

    /// Asks the model for new backlog items and drops every suggestion whose
    /// best cosine against an existing issue reaches the redundancy
    /// threshold. Surviving suggestions keep the model's order.
    pub fn suggest_new_issues(
        &self,
        request: &SuggestionRequest,
        snapshot: &BacklogSnapshot,
        embedder: &Embedder,
        engine: &EngineConfig,
    ) -> Result<Vec<IssueSuggestion>, SuggestError> {
        request.validate()?;
        engine
            .validate()
            .map_err(|e| SuggestError::InvalidRequest(e.to_string()))?;
        let digest = request
            .issue_digest
            .iter()
            .map(|(k, s)| format!("- {k}: {s}"))
            .collect::<Vec<_>>()
            .join("\n");
        let vars: HashMap<&str, String> = [
            ("project_description", request.project_description.clone()),
            ("issue_digest", digest),
            ("user_prompt", request.user_prompt.clone().unwrap_or_default()),
            ("max_suggestions", request.max_suggestions.to_string()),
        ]
        .into_iter()
        .collect();
        let chat = ChatRequest {
            prompt: render(&self.templates.suggest_issues, &vars),
            task: ChatTask::SuggestIssues {
                request: request.clone(),
            },
            reformat_attempt: false,
        };
        let mut suggestions = self.ask(chat, parse_model_output)?;
        suggestions.truncate(request.max_suggestions);
        if suggestions.is_empty() {
            return Ok(suggestions);
        }

        let existing_texts: Vec<String> = snapshot.issues.iter().map(issue_text).collect();
        let existing = embedder.embed_batch(&existing_texts)?;
        let candidate_texts: Vec<String> = suggestions.iter().map(IssueSuggestion::text).collect();
        let candidates = embedder.embed_batch(&candidate_texts)?;

        let threshold = engine.new_issue_redundancy_threshold;
        let mut kept = Vec::with_capacity(suggestions.len());
        for (mut suggestion, vector) in suggestions.into_iter().zip(&candidates) {
            let mut best = 0.0f64;
            for other in &existing {
                let score = cosine(vector, other).map_err(|e| SuggestError::Config(e.to_string()))?;
                best = best.max(score);
            }
            if best >= threshold {
                log::debug!(
                    "dropping redundant suggestion {:?} (score {best:.4})",
                    suggestion.summary
                );
                continue;
            }
            suggestion.redundancy_score = Some(best);
            kept.push(suggestion);
        }
        Ok(kept)
    }
}

impl MergeDrafter for Suggester {
    fn draft_merge(&self, survivor: &Issue, absorbed: &[&Issue]) -> Result<(String, String), DedupError> {
        let mut issues = vec![survivor.clone()];
        issues.extend(absorbed.iter().map(|i| (*i).clone()));
        self.draft_merge_text(&issues)
            .map_err(|e| DedupError::DraftingFailed(e.to_string()))
    }
}
