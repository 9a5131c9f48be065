//! In-memory stand-in for the Jira Cloud REST endpoints the gateway uses.

use std::collections::BTreeMap;
use std::sync::Mutex;

use backlog_groom::gateway::{adf_to_text, text_to_adf};
use backlog_groom::http::{HttpRequest, HttpResponse, HttpTransport, Method, TransportError};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct FakeIssue {
    pub summary: String,
    pub description: String,
    pub status: String,
    pub labels: Vec<String>,
    pub comments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FakeLink {
    pub kind: String,
    pub inward: String,
    pub outward: String,
}

#[derive(Default)]
pub struct State {
    pub project: String,
    pub issues: BTreeMap<u64, FakeIssue>,
    pub links: Vec<FakeLink>,
    pub requests: Vec<(Method, String)>,
    /// Respond 429 to this many upcoming requests.
    pub throttle: usize,
    /// Requests whose path contains this substring get a 500.
    pub fail_path: Option<String>,
    /// Required `Authorization` header value, if any.
    pub auth: Option<String>,
}

pub struct FakeJira {
    pub state: Mutex<State>,
}

const TRANSITIONS: &[(&str, &str)] = &[
    ("11", "In Progress"),
    ("21", "Done"),
    ("31", "Closed"),
    ("41", "To Do"),
];

fn respond(status: u16, body: Value) -> Result<HttpResponse, TransportError> {
    Ok(HttpResponse {
        status,
        body: body.to_string(),
    })
}

impl FakeJira {
    pub fn with_issues(project: &str, n: u64) -> Self {
        let issues = (1..=n)
            .map(|i| {
                (
                    i,
                    FakeIssue {
                        summary: format!("Issue {i}"),
                        description: format!("Details of issue {i}"),
                        status: "To Do".into(),
                        labels: vec![],
                        comments: vec![],
                    },
                )
            })
            .collect();
        FakeJira {
            state: Mutex::new(State {
                project: project.into(),
                issues,
                ..State::default()
            }),
        }
    }

    pub fn set_summary(&self, n: u64, summary: &str, description: &str) {
        let mut s = self.state.lock().unwrap();
        let issue = s.issues.get_mut(&n).unwrap();
        issue.summary = summary.into();
        issue.description = description.into();
    }

    pub fn requests(&self) -> Vec<(Method, String)> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn mutations(&self) -> usize {
        self.requests().iter().filter(|(m, _)| *m != Method::Get).count()
    }

    pub fn issue(&self, n: u64) -> FakeIssue {
        self.state.lock().unwrap().issues[&n].clone()
    }

    fn key_num(s: &State, key: &str) -> Option<u64> {
        key.strip_prefix(&format!("{}-", s.project))?.parse().ok()
    }

    fn issue_json(s: &State, n: u64) -> Value {
        let key = format!("{}-{n}", s.project);
        let i = &s.issues[&n];
        let links: Vec<Value> = s
            .links
            .iter()
            .filter_map(|l| {
                if l.inward == key {
                    Some(json!({"type": {"name": l.kind}, "outwardIssue": {"key": l.outward}}))
                } else if l.outward == key {
                    Some(json!({"type": {"name": l.kind}, "inwardIssue": {"key": l.inward}}))
                } else {
                    None
                }
            })
            .collect();
        json!({"key": key, "fields": {
            "summary": i.summary,
            "description": if i.description.is_empty() { Value::Null } else { text_to_adf(&i.description) },
            "status": {"name": i.status},
            "labels": i.labels,
            "created": format!("2024-01-{:02}T09:00:00.000+0000", 1 + n % 28),
            "updated": "2024-02-01T09:00:00.000+0000",
            "comment": {"comments": i.comments.iter().map(|c| json!({"body": text_to_adf(c)})).collect::<Vec<_>>()},
            "issuelinks": links,
        }})
    }
}

impl HttpTransport for FakeJira {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut s = self.state.lock().unwrap();
        s.requests.push((req.method, req.url.clone()));
        if s.throttle > 0 {
            s.throttle -= 1;
            return respond(429, json!({}));
        }
        if let Some(expected) = &s.auth {
            let given = req
                .headers
                .iter()
                .find(|(k, _)| k == "Authorization")
                .map(|(_, v)| v);
            if given != Some(expected) {
                return respond(401, json!({}));
            }
        }
        let url = url::Url::parse(&req.url).map_err(|e| TransportError(e.to_string()))?;
        let path = url.path().trim_start_matches("/rest/api/3/").to_string();
        if s.fail_path.as_deref().is_some_and(|f| path.contains(f)) {
            return respond(500, json!({"errorMessages": ["boom"]}));
        }
        let q = |name: &str| {
            url.query_pairs()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v.to_string())
        };
        let parts: Vec<&str> = path.split('/').collect();
        let body = req.body.clone().unwrap_or(Value::Null);
        match (req.method, parts.as_slice()) {
            (Method::Get, ["search"]) => {
                let jql = q("jql").unwrap_or_default();
                if jql != format!("project={} ORDER BY key ASC", s.project) {
                    return respond(400, json!({"errorMessages": ["project does not exist"]}));
                }
                let start: usize = q("startAt").and_then(|v| v.parse().ok()).unwrap_or(0);
                let max: usize = q("maxResults").and_then(|v| v.parse().ok()).unwrap_or(50);
                let nums: Vec<u64> = s.issues.keys().copied().collect();
                let page: Vec<Value> = nums
                    .iter()
                    .skip(start)
                    .take(max)
                    .map(|n| Self::issue_json(&s, *n))
                    .collect();
                respond(
                    200,
                    json!({"startAt": start, "maxResults": max, "total": nums.len(), "issues": page}),
                )
            }
            (Method::Get, ["issue", key]) => {
                match Self::key_num(&s, key).filter(|n| s.issues.contains_key(n)) {
                    Some(n) => respond(200, Self::issue_json(&s, n)),
                    None => respond(404, json!({"errorMessages": ["Issue does not exist"]})),
                }
            }
            (Method::Put, ["issue", key]) => {
                let Some(n) = Self::key_num(&s, key).filter(|n| s.issues.contains_key(n)) else {
                    return respond(404, json!({}));
                };
                let fields = &body["fields"];
                let issue = s.issues.get_mut(&n).unwrap();
                if let Some(summary) = fields["summary"].as_str() {
                    issue.summary = summary.into();
                }
                if !fields["description"].is_null() {
                    issue.description = adf_to_text(&fields["description"]);
                }
                respond(204, Value::Null)
            }
            (Method::Post, ["issue", key, "comment"]) => {
                let Some(n) = Self::key_num(&s, key).filter(|n| s.issues.contains_key(n)) else {
                    return respond(404, json!({}));
                };
                let text = adf_to_text(&body["body"]);
                s.issues.get_mut(&n).unwrap().comments.push(text);
                respond(201, json!({"id": "10000"}))
            }
            (Method::Get, ["issue", _, "transitions"]) => respond(
                200,
                json!({"transitions": TRANSITIONS.iter().map(|(id, to)| json!({"id": id, "name": format!("Move to {to}"), "to": {"name": to}})).collect::<Vec<_>>()}),
            ),
            (Method::Post, ["issue", key, "transitions"]) => {
                let Some(n) = Self::key_num(&s, key).filter(|n| s.issues.contains_key(n)) else {
                    return respond(404, json!({}));
                };
                let id = body["transition"]["id"].as_str().unwrap_or_default();
                match TRANSITIONS.iter().find(|(t, _)| *t == id) {
                    Some((_, to)) => {
                        s.issues.get_mut(&n).unwrap().status = to.to_string();
                        respond(204, Value::Null)
                    }
                    None => respond(400, json!({"errorMessages": ["bad transition"]})),
                }
            }
            (Method::Post, ["issueLink"]) => {
                let link = FakeLink {
                    kind: body["type"]["name"].as_str().unwrap_or_default().into(),
                    inward: body["inwardIssue"]["key"].as_str().unwrap_or_default().into(),
                    outward: body["outwardIssue"]["key"].as_str().unwrap_or_default().into(),
                };
                s.links.push(link);
                respond(201, Value::Null)
            }
            (Method::Post, ["issue"]) => {
                let fields = &body["fields"];
                if fields["project"]["key"].as_str() != Some(s.project.as_str()) {
                    return respond(400, json!({}));
                }
                let n = s.issues.keys().max().copied().unwrap_or(0) + 1;
                s.issues.insert(
                    n,
                    FakeIssue {
                        summary: fields["summary"].as_str().unwrap_or_default().into(),
                        description: adf_to_text(&fields["description"]),
                        status: "To Do".into(),
                        labels: fields["labels"]
                            .as_array()
                            .map(|l| l.iter().filter_map(Value::as_str).map(String::from).collect())
                            .unwrap_or_default(),
                        comments: vec![],
                    },
                );
                respond(
                    201,
                    json!({"id": n.to_string(), "key": format!("{}-{n}", s.project)}),
                )
            }
            _ => respond(404, json!({"errorMessages": ["no such endpoint"]})),
        }
    }
}
