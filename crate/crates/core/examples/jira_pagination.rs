//! Drive the Jira REST gateway against an in-memory fake server: fetch a
//! 120-issue project in pages of 50, then close one issue.

use std::sync::{Arc, Mutex};

use backlog_groom::clock::SystemClock;
use backlog_groom::gateway::{BacklogGateway, RestAuth, RestGateway};
use backlog_groom::http::{HttpRequest, HttpResponse, HttpTransport, Method, TransportError};
use backlog_groom::model::{GroomingAction, IssueStatus};
use serde_json::json;

/// Just enough of the search and transition endpoints for this example.
struct FakeJira {
    total: usize,
    closed: Mutex<Vec<String>>,
    requests: Mutex<Vec<String>>,
}

impl HttpTransport for FakeJira {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.requests
            .lock()
            .unwrap()
            .push(format!("{:?} {}", req.method, req.url));
        let url = url::Url::parse(&req.url).map_err(|e| TransportError(e.to_string()))?;
        let param = |name: &str| {
            url.query_pairs()
                .find(|(k, _)| k == name)
                .and_then(|(_, v)| v.parse::<usize>().ok())
                .unwrap_or(0)
        };
        let path = url.path().trim_start_matches("/rest/api/3/").to_string();
        let body = match (req.method, path.as_str()) {
            (Method::Get, "search") => {
                let (start, max) = (param("startAt"), param("maxResults"));
                let issues: Vec<_> = (start..self.total.min(start + max))
                    .map(|i| {
                        json!({"key": format!("DEMO-{}", i + 1), "fields": {
                            "summary": format!("Issue number {}", i + 1),
                            "description": null,
                            "status": {"name": "To Do"},
                            "labels": [],
                            "created": "2024-01-01T09:00:00.000+0000",
                            "updated": "2024-01-02T09:00:00.000+0000"}})
                    })
                    .collect();
                json!({"startAt": start, "maxResults": max, "total": self.total, "issues": issues})
            }
            (Method::Get, p) if p.ends_with("/transitions") => {
                json!({"transitions": [{"id": "31", "name": "Close", "to": {"name": "Closed"}}]})
            }
            (Method::Post, p) if p.ends_with("/transitions") => {
                let key = p.split('/').nth(1).unwrap_or_default().to_string();
                self.closed.lock().unwrap().push(key);
                json!({})
            }
            (Method::Get, p) if p.starts_with("issue/") => {
                json!({"key": p.trim_start_matches("issue/"), "fields": {"status": {"name": "To Do"}}})
            }
            _ => {
                return Ok(HttpResponse {
                    status: 404,
                    body: String::new(),
                })
            }
        };
        Ok(HttpResponse {
            status: 200,
            body: body.to_string(),
        })
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fake = Arc::new(FakeJira {
        total: 120,
        closed: Mutex::new(Vec::new()),
        requests: Mutex::new(Vec::new()),
    });
    let gateway = RestGateway::new(
        fake.clone(),
        "https://example.atlassian.net",
        "DEMO",
        Some(RestAuth::Bearer("token".into())),
        Arc::new(SystemClock),
    )
    .with_page_size(50);

    let snapshot = gateway.fetch_backlog()?;
    println!(
        "fetched {} issues with {} requests:",
        snapshot.len(),
        fake.requests.lock().unwrap().len()
    );
    for r in fake.requests.lock().unwrap().iter() {
        println!("  {r}");
    }

    let receipt = gateway.apply_action(&GroomingAction::UpdateStatus {
        key: "DEMO-7".into(),
        status: IssueStatus::Closed,
    })?;
    println!("\n{}", serde_json::to_string_pretty(&receipt)?);
    println!("closed: {:?}", fake.closed.lock().unwrap());
    Ok(())
}
