//! Run the review HTTP API on an ephemeral port and walk through a session
//! with plain HTTP calls, the way the web UI does.

use std::sync::Arc;

use backlog_groom::clock::SystemClock;
use backlog_groom::dedup::EngineConfig;
use backlog_groom::embedding::Embedder;
use backlog_groom::gateway::FixtureGateway;
use backlog_groom::review::{router, ReviewService};
use backlog_groom::suggest::Suggester;
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let backlog = dir.path().join("backlog.json");
    std::fs::copy(
        concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backlog51.json"),
        &backlog,
    )?;

    let service = ReviewService::new(
        Arc::new(FixtureGateway::new(&backlog, Arc::new(SystemClock))),
        Arc::new(Embedder::local(256)),
        Arc::new(Suggester::mock()),
        EngineConfig::with_threshold(0.8),
        Arc::new(SystemClock),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(Arc::new(service))).await });

    // ureq is blocking; keep it off the async workers.
    let result =
        tokio::task::spawn_blocking(move || -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
            let post = |path: &str, body: Value| -> Result<Value, Box<dyn std::error::Error + Send + Sync>> {
                Ok(ureq::post(&format!("{base}{path}"))
                    .send_json(body)?
                    .into_json()?)
            };
            let get = |path: &str| -> Result<Value, Box<dyn std::error::Error + Send + Sync>> {
                Ok(ureq::get(&format!("{base}{path}")).call()?.into_json()?)
            };

            let session = post("/api/sessions", json!({"mode": "interactive"}))?;
            let id = session["session_id"].as_str().unwrap_or_default().to_string();
            let rows = get(&format!("/api/sessions/{id}/candidates"))?;
            println!(
                "session {id}: {} candidate rows",
                rows.as_array().map_or(0, Vec::len)
            );

            if let Some(first) = rows.get(0) {
                let decided = post(
                    &format!("/api/sessions/{id}/decisions"),
                    json!({"target": first["id"], "verdict": "Accept"}),
                )?;
                println!("decision: {decided}");
            }
            let report = post(&format!("/api/sessions/{id}/apply"), json!({}))?;
            println!(
                "applied: {}  receipts: {}",
                report["applied"],
                report["receipts"].as_array().map_or(0, Vec::len)
            );

            // A second apply is refused with a structured error.
            match ureq::post(&format!("{base}/api/sessions/{id}/apply")).send_json(json!({})) {
                Err(ureq::Error::Status(code, resp)) => println!("again: {code} {}", resp.into_string()?),
                other => println!("unexpected: {other:?}"),
            }
            Ok(())
        })
        .await?;
    result.map_err(|e| e.to_string().into())
}
