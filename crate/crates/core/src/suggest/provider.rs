use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{SuggestError, SuggestionRequest};
use crate::http::{HttpRequest, HttpTransport, Method, RetryPolicy, UreqTransport};
use crate::model::Issue;

/// What a chat request is for. Remote providers only look at the rendered
/// prompt; the mock uses the structured payload to build its reply.
#[derive(Debug, Clone, PartialEq)]
pub enum ChatTask {
    DraftMerge { issues: Vec<Issue> },
    SuggestIssues { request: SuggestionRequest },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub task: ChatTask,
    pub prompt: String,
    pub reformat_attempt: bool,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, SuggestError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChatProviderKind {
    RemoteApi,
    Mock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatProviderConfig {
    pub provider: ChatProviderKind,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
    pub api_url: Option<String>,
    pub api_key: Option<String>,
}

impl Default for ChatProviderConfig {
    fn default() -> Self {
        ChatProviderConfig {
            provider: ChatProviderKind::Mock,
            model_name: "mock".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            request_timeout: Duration::from_secs(60),
            api_url: None,
            api_key: None,
        }
    }
}

impl ChatProviderConfig {
    pub fn build(&self) -> Result<Arc<dyn ChatProvider>, SuggestError> {
        let transport = Arc::new(UreqTransport::new(self.request_timeout));
        self.build_with_transport(transport)
    }

    pub fn build_with_transport(
        &self,
        transport: Arc<dyn HttpTransport>,
    ) -> Result<Arc<dyn ChatProvider>, SuggestError> {
        if !(self.temperature >= 0.0) {
            return Err(SuggestError::Config("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(SuggestError::Config("max_output_tokens must be positive".into()));
        }
        match self.provider {
            ChatProviderKind::Mock => Ok(Arc::new(MockChatProvider::new())),
            ChatProviderKind::RemoteApi => {
                let url = self
                    .api_url
                    .clone()
                    .ok_or_else(|| SuggestError::Config("remote chat provider needs CHAT_API_URL".into()))?;
                Ok(Arc::new(RemoteChatProvider {
                    transport,
                    url,
                    api_key: self.api_key.clone(),
                    model_name: self.model_name.clone(),
                    temperature: self.temperature,
                    max_output_tokens: self.max_output_tokens,
                    retry: RetryPolicy::default(),
                }))
            }
        }
    }
}

/// Client for an OpenAI-style chat completions endpoint.
pub struct RemoteChatProvider {
    transport: Arc<dyn HttpTransport>,
    url: String,
    api_key: Option<String>,
    model_name: String,
    temperature: f64,
    max_output_tokens: u32,
    retry: RetryPolicy,
}

impl RemoteChatProvider {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        url: impl Into<String>,
        model_name: impl Into<String>,
    ) -> Self {
        RemoteChatProvider {
            transport,
            url: url.into(),
            api_key: None,
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

const SYSTEM_PROMPT: &str = "You are a backlog grooming assistant. Reply with JSON only.";

impl ChatProvider for RemoteChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, SuggestError> {
        let mut http = HttpRequest::new(Method::Post, &self.url).json(json!({
            "model": self.model_name,
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": request.prompt},
            ],
        }));
        if let Some(key) = &self.api_key {
            http = http.header("Authorization", format!("Bearer {key}"));
        }
        let mut status = None;
        let mut message = String::new();
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
            match self.transport.send(&http) {
                Ok(resp) if resp.is_success() => {
                    let parsed: CompletionResponse =
                        serde_json::from_str(&resp.body).map_err(|e| SuggestError::Provider {
                            status: Some(resp.status),
                            attempts: attempt + 1,
                            message: format!("unreadable completion response: {e}"),
                        })?;
                    return parsed
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .ok_or_else(|| SuggestError::Provider {
                            status: Some(resp.status),
                            attempts: attempt + 1,
                            message: "completion has no content".into(),
                        });
                }
                Ok(resp) => {
                    status = Some(resp.status);
                    message = resp.body.chars().take(200).collect();
                    if resp.status != 429 && resp.status < 500 {
                        return Err(SuggestError::Provider {
                            status,
                            attempts: attempt + 1,
                            message,
                        });
                    }
                }
                Err(e) => {
                    status = None;
                    message = e.to_string();
                }
            }
        }
        Err(SuggestError::Provider {
            status,
            attempts: self.retry.attempts,
            message,
        })
    }
}

const CATALOG: &[(&str, &str, &str)] = &[
    (
        "Add structured logging for background jobs",
        "Emit JSON log lines with a request id from every background worker so failures can be traced end to end.",
        "No backlog item covers operational visibility of asynchronous work.",
    ),
    (
        "Define an acceptance criteria template for stories",
        "Agree on a Given/When/Then template and apply it to new stories during refinement.",
        "Several items lack testable acceptance criteria.",
    ),
    (
        "Automate dependency update pull requests",
        "Configure a bot that opens weekly pull requests for outdated third-party packages.",
        "Keeping libraries current is not tracked anywhere in the backlog.",
    ),
    (
        "Set a performance budget for key pages",
        "Measure first contentful paint on the top five pages and fail CI when the budget is exceeded.",
        "Performance regressions are only found after release.",
    ),
    (
        "Write an incident response runbook",
        "Document on-call escalation, status page updates and post-mortem steps.",
        "The backlog has no item for handling production incidents.",
    ),
];

/// Deterministic offline stand-in for a chat model.
///
/// Scripted replies, when given, are returned in order (the last one
/// repeats). Otherwise merge requests get the lowest-key issue's summary
/// with all descriptions joined by `"\n---\n"` in key order, and suggestion
/// requests get a fixed catalog, led by an item echoing the user prompt when
/// one is present.
#[derive(Default)]
pub struct MockChatProvider {
    script: Mutex<VecDeque<String>>,
    failure: Option<String>,
    prompts: Mutex<Vec<String>>,
}

impl MockChatProvider {
    pub fn new() -> Self {
        MockChatProvider::default()
    }

    pub fn with_responses(responses: Vec<String>) -> Self {
        MockChatProvider {
            script: Mutex::new(responses.into()),
            ..Default::default()
        }
    }

    pub fn failing(message: impl Into<String>) -> Self {
        MockChatProvider {
            failure: Some(message.into()),
            ..Default::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().expect("mock lock poisoned").len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("mock lock poisoned").clone()
    }

    fn default_reply(task: &ChatTask) -> String {
        match task {
            ChatTask::DraftMerge { issues } => {
                let mut sorted: Vec<&Issue> = issues.iter().collect();
                sorted.sort_by(|a, b| a.key.cmp(&b.key));
                let summary = sorted.first().map(|i| i.summary.as_str()).unwrap_or_default();
                let description = sorted
                    .iter()
                    .map(|i| i.description.as_str())
                    .collect::<Vec<_>>()
                    .join("\n---\n");
                json!({"summary": summary, "description": description}).to_string()
            }
            ChatTask::SuggestIssues { request } => {
                let mut items = Vec::new();
                if let Some(prompt) = request
                    .user_prompt
                    .as_deref()
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                {
                    items.push(json!({
                        "summary": format!("Investigate: {prompt}"),
                        "description": format!("Follow-up requested during grooming: {prompt}"),
                        "rationale": "Requested explicitly by the user.",
                    }));
                }
                for (summary, description, rationale) in CATALOG {
                    items.push(json!({
                        "summary": summary,
                        "description": description,
                        "rationale": rationale,
                    }));
                }
                items.truncate(request.max_suggestions);
                serde_json::Value::Array(items).to_string()
            }
        }
    }
}

impl ChatProvider for MockChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, SuggestError> {
        self.prompts
            .lock()
            .expect("mock lock poisoned")
            .push(request.prompt.clone());
        if let Some(message) = &self.failure {
            return Err(SuggestError::Provider {
                status: None,
                attempts: 1,
                message: message.clone(),
            });
        }
        let mut script = self.script.lock().expect("mock lock poisoned");
        match script.len() {
            0 => Ok(Self::default_reply(&request.task)),
            1 => Ok(script[0].clone()),
            _ => Ok(script.pop_front().expect("non-empty")),
        }
    }
}
