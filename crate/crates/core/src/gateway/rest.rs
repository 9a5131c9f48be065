//! Jira Cloud (REST v3) client.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use base64::Engine;
use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use super::{
    merged_comment, ApplyReceipt, BacklogGateway, GatewayError, StepKind, StepOutcome, DUPLICATE_LINK,
};
use crate::clock::Clock;
use crate::http::{HttpRequest, HttpResponse, HttpTransport, Method, RetryPolicy};
use crate::model::{BacklogSnapshot, GroomingAction, Issue, IssueStatus};

const SEARCH_FIELDS: &str = "summary,description,status,labels,created,updated";
const NEW_ISSUE_TYPE: &str = "Task";

#[derive(Clone, PartialEq)]
pub enum RestAuth {
    Bearer(String),
    Basic { user: String, token: String },
}

impl std::fmt::Debug for RestAuth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RestAuth::Bearer(_) => f.write_str("Bearer(***)"),
            RestAuth::Basic { user, .. } => write!(f, "Basic({user}:***)"),
        }
    }
}

impl RestAuth {
    fn header_value(&self) -> String {
        match self {
            RestAuth::Bearer(token) => format!("Bearer {token}"),
            RestAuth::Basic { user, token } => format!(
                "Basic {}",
                base64::engine::general_purpose::STANDARD.encode(format!("{user}:{token}"))
            ),
        }
    }
}

/// Plain text to an Atlassian document: one paragraph per line.
pub fn text_to_adf(text: &str) -> Value {
    let content: Vec<Value> = if text.is_empty() {
        Vec::new()
    } else {
        text.split('\n')
            .map(|line| {
                if line.is_empty() {
                    json!({"type": "paragraph", "content": []})
                } else {
                    json!({"type": "paragraph", "content": [{"type": "text", "text": line}]})
                }
            })
            .collect()
    };
    json!({"type": "doc", "version": 1, "content": content})
}

/// Flattens an Atlassian document (or a plain string) to text. Block nodes
/// become lines; hard breaks become newlines; marks are dropped.
pub fn adf_to_text(value: &Value) -> String {
    fn inline(node: &Value, out: &mut String) {
        match node.get("type").and_then(Value::as_str) {
            Some("text") => out.push_str(node.get("text").and_then(Value::as_str).unwrap_or_default()),
            Some("hardBreak") => out.push('\n'),
            _ => {
                for child in children(node) {
                    inline(child, out);
                }
            }
        }
    }
    fn children(node: &Value) -> &[Value] {
        node.get("content")
            .and_then(Value::as_array)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }
    fn blocks(node: &Value, lines: &mut Vec<String>) {
        for child in children(node) {
            match child.get("type").and_then(Value::as_str) {
                Some("paragraph" | "heading" | "codeBlock") => {
                    let mut line = String::new();
                    inline(child, &mut line);
                    lines.push(line);
                }
                _ => blocks(child, lines),
            }
        }
    }
    match value {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => {
            let mut lines = Vec::new();
            blocks(other, &mut lines);
            lines.join("\n")
        }
    }
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f%z")
        .or_else(|_| DateTime::parse_from_rfc3339(raw))
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

fn unexpected(resp: &HttpResponse) -> GatewayError {
    GatewayError::UnexpectedResponse {
        status: resp.status,
        body: resp.body.chars().take(200).collect(),
    }
}

fn parse_body(resp: &HttpResponse) -> Result<Value, GatewayError> {
    serde_json::from_str(&resp.body).map_err(|_| unexpected(resp))
}

fn parse_issue(value: &Value) -> Result<Issue, String> {
    let key = value["key"].as_str().ok_or("issue without key")?.to_string();
    let fields = &value["fields"];
    let time = |name: &str| {
        fields[name]
            .as_str()
            .and_then(parse_timestamp)
            .ok_or_else(|| format!("{key}: bad or missing {name} timestamp"))
    };
    Ok(Issue {
        summary: fields["summary"].as_str().unwrap_or_default().to_string(),
        description: adf_to_text(&fields["description"]),
        status: IssueStatus::from_tracker_name(fields["status"]["name"].as_str().unwrap_or_default()),
        labels: fields["labels"]
            .as_array()
            .map(|ls| ls.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default(),
        created_at: time("created")?,
        updated_at: time("updated")?,
        key,
    })
}

pub struct RestGateway {
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    project_key: String,
    auth: Option<RestAuth>,
    clock: Arc<dyn Clock>,
    page_size: usize,
    retry: RetryPolicy,
    lock: RwLock<()>,
}

impl RestGateway {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        base_url: impl Into<String>,
        project_key: impl Into<String>,
        auth: Option<RestAuth>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        RestGateway {
            transport,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            project_key: project_key.into(),
            auth,
            clock,
            page_size: 50,
            retry: RetryPolicy::default(),
            lock: RwLock::new(()),
        }
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}/rest/api/3/{path}", self.base_url)
    }

    /// Sends with retry on 429, 5xx and transport errors. Credential
    /// rejections become `AuthFailed`; other statuses are left to the caller.
    fn send(&self, method: Method, url: String, body: Option<Value>) -> Result<HttpResponse, GatewayError> {
        let mut req = HttpRequest::new(method, url).header("Accept", "application/json");
        if let Some(auth) = &self.auth {
            req = req.header("Authorization", auth.header_value());
        }
        if let Some(body) = body {
            req = req.json(body);
        }
        let mut last = GatewayError::Transport("no attempts made".into());
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
            match self.transport.send(&req) {
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(GatewayError::AuthFailed { status: resp.status });
                }
                Ok(resp) if resp.status == 429 => {
                    last = GatewayError::RateLimited {
                        attempts: attempt + 1,
                    };
                }
                Ok(resp) if resp.status >= 500 => last = unexpected(&resp),
                Ok(resp) => return Ok(resp),
                Err(e) => last = GatewayError::Transport(e.0),
            }
        }
        Err(last)
    }

    fn get_issue(&self, key: &str, fields: &str) -> Result<Value, GatewayError> {
        let resp = self.send(
            Method::Get,
            self.url(&format!("issue/{key}?fields={fields}")),
            None,
        )?;
        match resp.status {
            404 => Err(GatewayError::UnknownIssue(key.to_string())),
            s if (200..300).contains(&s) => parse_body(&resp),
            _ => Err(unexpected(&resp)),
        }
    }

    fn expect_success(resp: HttpResponse) -> Result<HttpResponse, GatewayError> {
        if resp.is_success() {
            Ok(resp)
        } else {
            Err(unexpected(&resp))
        }
    }

    fn search_page(&self, start_at: usize) -> Result<Value, GatewayError> {
        let mut url =
            url::Url::parse(&self.url("search")).map_err(|e| GatewayError::Config(e.to_string()))?;
        url.query_pairs_mut()
            .append_pair("jql", &format!("project={} ORDER BY key ASC", self.project_key))
            .append_pair("startAt", &start_at.to_string())
            .append_pair("maxResults", &self.page_size.to_string())
            .append_pair("fields", SEARCH_FIELDS);
        let resp = self.send(Method::Get, url.to_string(), None)?;
        match resp.status {
            400 | 404 => Err(GatewayError::ProjectNotFound(self.project_key.clone())),
            s if (200..300).contains(&s) => parse_body(&resp),
            _ => Err(unexpected(&resp)),
        }
    }

    fn transition(&self, key: &str, current: &str, target: IssueStatus) -> StepOutcome {
        if IssueStatus::from_tracker_name(current) == target {
            return StepOutcome::AlreadySatisfied;
        }
        let result = (|| {
            let resp = Self::expect_success(self.send(
                Method::Get,
                self.url(&format!("issue/{key}/transitions")),
                None,
            )?)?;
            let body = parse_body(&resp)?;
            let wanted = target.tracker_name();
            let transitions: Vec<&Value> = body["transitions"].as_array().into_iter().flatten().collect();
            let to_name = |t: &Value| {
                t["to"]["name"]
                    .as_str()
                    .or(t["name"].as_str())
                    .unwrap_or_default()
                    .to_string()
            };
            // Prefer a transition named exactly like the target status; fall
            // back to one whose destination maps onto it (e.g. "To Do").
            let id = transitions
                .iter()
                .find(|t| to_name(t).eq_ignore_ascii_case(wanted))
                .or_else(|| {
                    transitions
                        .iter()
                        .find(|t| IssueStatus::from_tracker_name(&to_name(t)) == target)
                })
                .and_then(|t| t["id"].as_str().map(str::to_string));
            let Some(id) = id else {
                return Ok(Some(format!("no transition to {wanted} available")));
            };
            Self::expect_success(self.send(
                Method::Post,
                self.url(&format!("issue/{key}/transitions")),
                Some(json!({"transition": {"id": id}})),
            )?)?;
            Ok::<_, GatewayError>(None)
        })();
        match result {
            Ok(None) => StepOutcome::Applied,
            Ok(Some(msg)) => StepOutcome::Failed(msg),
            Err(e) => StepOutcome::Failed(e.to_string()),
        }
    }

    fn outcome(result: Result<HttpResponse, GatewayError>) -> StepOutcome {
        match result.and_then(Self::expect_success) {
            Ok(_) => StepOutcome::Applied,
            Err(e) => StepOutcome::Failed(e.to_string()),
        }
    }

    fn apply_merge(
        &self,
        receipt: &mut ApplyReceipt,
        survivor: &str,
        absorbed: &[String],
        summary: &str,
        description: &str,
    ) -> Result<(), GatewayError> {
        // Fetch every target before writing anything, so a missing issue
        // aborts the action cleanly.
        let current = self.get_issue(survivor, "summary,description")?;
        let mut others = Vec::with_capacity(absorbed.len());
        for key in absorbed {
            others.push(self.get_issue(key, "status,comment,issuelinks")?);
        }

        let fields = &current["fields"];
        let text_done =
            fields["summary"].as_str() == Some(summary) && adf_to_text(&fields["description"]) == description;
        let outcome = if text_done {
            StepOutcome::AlreadySatisfied
        } else {
            Self::outcome(self.send(
                Method::Put,
                self.url(&format!("issue/{survivor}")),
                Some(json!({"fields": {"summary": summary, "description": text_to_adf(description)}})),
            ))
        };
        receipt.record(survivor, StepKind::UpdateText, outcome);

        let comment = merged_comment(survivor);
        for (key, issue) in absorbed.iter().zip(&others) {
            let fields = &issue["fields"];
            let linked = fields["issuelinks"].as_array().into_iter().flatten().any(|l| {
                l["type"]["name"].as_str() == Some(DUPLICATE_LINK)
                    && l["outwardIssue"]["key"].as_str() == Some(survivor)
            });
            let outcome = if linked {
                StepOutcome::AlreadySatisfied
            } else {
                Self::outcome(self.send(
                    Method::Post,
                    self.url("issueLink"),
                    Some(json!({
                        "type": {"name": DUPLICATE_LINK},
                        "inwardIssue": {"key": key},
                        "outwardIssue": {"key": survivor},
                    })),
                ))
            };
            receipt.record(key, StepKind::LinkDuplicate, outcome);

            let commented = fields["comment"]["comments"]
                .as_array()
                .into_iter()
                .flatten()
                .any(|c| adf_to_text(&c["body"]) == comment);
            let outcome = if commented {
                StepOutcome::AlreadySatisfied
            } else {
                Self::outcome(self.send(
                    Method::Post,
                    self.url(&format!("issue/{key}/comment")),
                    Some(json!({"body": text_to_adf(&comment)})),
                ))
            };
            receipt.record(key, StepKind::Comment, outcome);

            let status = fields["status"]["name"].as_str().unwrap_or_default();
            let outcome = self.transition(key, status, IssueStatus::Closed);
            receipt.record(key, StepKind::Transition, outcome);
        }
        Ok(())
    }
}

impl BacklogGateway for RestGateway {
    fn fetch_backlog(&self) -> Result<BacklogSnapshot, GatewayError> {
        let _guard = self.lock.read().expect("gateway lock poisoned");
        let mut issues = BTreeMap::new();
        let mut start_at = 0;
        loop {
            let page = self.search_page(start_at)?;
            let batch = page["issues"].as_array().cloned().unwrap_or_default();
            if batch.is_empty() {
                break;
            }
            for raw in &batch {
                let issue = parse_issue(raw).map_err(|message| GatewayError::UnexpectedResponse {
                    status: 200,
                    body: message,
                })?;
                issues.insert(issue.key.clone(), issue);
            }
            start_at += batch.len();
            if let Some(total) = page["total"].as_u64() {
                if start_at as u64 >= total {
                    break;
                }
            }
        }
        BacklogSnapshot::new(
            self.project_key.clone(),
            issues.into_values().collect(),
            self.clock.now(),
        )
        .map_err(|e| GatewayError::UnexpectedResponse {
            status: 200,
            body: e.to_string(),
        })
    }

    fn apply_action(&self, action: &GroomingAction) -> Result<ApplyReceipt, GatewayError> {
        action
            .validate()
            .map_err(|e| GatewayError::InvalidAction(e.to_string()))?;
        let _guard = self.lock.write().expect("gateway lock poisoned");
        let mut receipt = ApplyReceipt::new(action.clone());
        match action {
            GroomingAction::MergeCluster {
                survivor,
                absorbed,
                summary,
                description,
            } => self.apply_merge(&mut receipt, survivor, absorbed, summary, description)?,
            GroomingAction::CreateIssue {
                summary,
                description,
                labels,
            } => {
                let resp = self.send(
                    Method::Post,
                    self.url("issue"),
                    Some(json!({"fields": {
                        "project": {"key": self.project_key},
                        "summary": summary,
                        "description": text_to_adf(description),
                        "issuetype": {"name": NEW_ISSUE_TYPE},
                        "labels": labels,
                    }})),
                );
                match resp.and_then(Self::expect_success).and_then(|r| parse_body(&r)) {
                    Ok(body) => match body["key"].as_str() {
                        Some(key) => {
                            receipt.record(key, StepKind::Create, StepOutcome::Applied);
                            receipt.created_key = Some(key.to_string());
                        }
                        None => receipt.record(
                            "",
                            StepKind::Create,
                            StepOutcome::Failed("response has no key".into()),
                        ),
                    },
                    Err(e) => receipt.record("", StepKind::Create, StepOutcome::Failed(e.to_string())),
                }
            }
            GroomingAction::UpdateStatus { key, status } => {
                let issue = self.get_issue(key, "status")?;
                let current = issue["fields"]["status"]["name"].as_str().unwrap_or_default();
                let outcome = self.transition(key, current, *status);
                receipt.record(key, StepKind::Transition, outcome);
            }
        }
        receipt.into_result()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::http::TransportError;
    use chrono::TimeZone;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<(u16, String)>>,
        seen: Mutex<Vec<HttpRequest>>,
    }

    impl Scripted {
        fn new(replies: &[(u16, &str)]) -> Arc<Self> {
            Arc::new(Scripted {
                replies: Mutex::new(replies.iter().rev().map(|(s, b)| (*s, b.to_string())).collect()),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl HttpTransport for Scripted {
        fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
            self.seen.lock().unwrap().push(request.clone());
            let (status, body) = self.replies.lock().unwrap().pop().unwrap_or((500, String::new()));
            Ok(HttpResponse { status, body })
        }
    }

    fn gateway(t: Arc<Scripted>, auth: Option<RestAuth>) -> RestGateway {
        let clock = Arc::new(FixedClock(Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap()));
        RestGateway::new(t, "https://jira.example/", "SHOP", auth, clock).with_retry(RetryPolicy::no_delay())
    }

    #[test]
    fn adf_round_trip() {
        for text in ["", "one line", "a\nb", "a\n\nb\n", "\n"] {
            assert_eq!(adf_to_text(&text_to_adf(text)), text, "{text:?}");
        }
        let doc = json!({"type":"doc","content":[{"type":"paragraph","content":[
            {"type":"text","text":"x","marks":[{"type":"strong"}]},{"type":"hardBreak"},{"type":"text","text":"y"}]}]});
        assert_eq!(adf_to_text(&doc), "x\ny");
        assert_eq!(adf_to_text(&Value::Null), "");
    }

    #[test]
    fn jira_timestamps() {
        let t = parse_timestamp("2024-01-08T09:00:00.000+0000").unwrap();
        assert_eq!(t, Utc.with_ymd_and_hms(2024, 1, 8, 9, 0, 0).unwrap());
        assert_eq!(parse_timestamp("2024-01-08T10:00:00+01:00"), Some(t));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn auth_headers() {
        assert_eq!(RestAuth::Bearer("t".into()).header_value(), "Bearer t");
        let basic = RestAuth::Basic {
            user: "me@x".into(),
            token: "tok".into(),
        };
        assert_eq!(basic.header_value(), "Basic bWVAeDp0b2s=");
        assert!(!format!("{basic:?}").contains("tok"));
    }

    #[test]
    fn credential_rejection() {
        let t = Scripted::new(&[(401, "")]);
        let gw = gateway(t.clone(), Some(RestAuth::Bearer("bad".into())));
        assert_eq!(gw.fetch_backlog(), Err(GatewayError::AuthFailed { status: 401 }));
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen.len(), 1);
        assert!(seen[0]
            .headers
            .contains(&("Authorization".into(), "Bearer bad".into())));
    }

    #[test]
    fn rate_limit_surfaces_after_three_attempts() {
        let t = Scripted::new(&[(429, ""), (429, ""), (429, ""), (200, "{}")]);
        let gw = gateway(t.clone(), None);
        assert_eq!(gw.fetch_backlog(), Err(GatewayError::RateLimited { attempts: 3 }));
        assert_eq!(t.seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn rate_limit_recovers() {
        let page = r#"{"startAt":0,"total":1,"issues":[{"key":"SHOP-1","fields":{"summary":"S","description":null,
            "status":{"name":"To Do"},"labels":["ui"],"created":"2024-01-01T00:00:00.000+0000","updated":"2024-01-02T00:00:00.000+0000"}}]}"#;
        let t = Scripted::new(&[(429, ""), (200, page)]);
        let snap = gateway(t.clone(), None).fetch_backlog().unwrap();
        assert_eq!(snap.len(), 1);
        assert_eq!(snap.issues[0].status, IssueStatus::Open);
        assert!(snap.issues[0].labels.contains("ui"));
        let url = &t.seen.lock().unwrap()[0].url;
        assert!(
            url.starts_with("https://jira.example/rest/api/3/search?jql=project%3DSHOP+ORDER+BY+key+ASC"),
            "{url}"
        );
    }

    #[test]
    fn unknown_project() {
        let t = Scripted::new(&[(400, r#"{"errorMessages":["bad project"]}"#)]);
        assert_eq!(
            gateway(t, None).fetch_backlog(),
            Err(GatewayError::ProjectNotFound("SHOP".into()))
        );
    }
}
