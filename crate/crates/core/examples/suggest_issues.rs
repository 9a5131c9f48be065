//! Ask the (offline mock) model for new backlog items. The second run
//! scripts a reply that restates an existing issue, which the redundancy
//! filter drops.

use std::sync::Arc;

use backlog_groom::clock::SystemClock;
use backlog_groom::dedup::EngineConfig;
use backlog_groom::embedding::Embedder;
use backlog_groom::gateway::{BacklogGateway, FixtureGateway};
use backlog_groom::suggest::{MockChatProvider, Suggester, SuggestionRequest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backlog51.json");
    let snapshot = FixtureGateway::new(path, Arc::new(SystemClock)).fetch_backlog()?;
    let embedder = Embedder::local(256);
    let engine = EngineConfig::default();

    let request = SuggestionRequest::for_snapshot(
        &snapshot,
        "An online shop with a storefront, checkout and an admin back office.",
        Some("accessibility audit".into()),
        4,
    );
    for s in Suggester::mock().suggest_new_issues(&request, &snapshot, &embedder, &engine)? {
        println!("{:.3}  {}", s.redundancy_score.unwrap_or_default(), s.summary);
    }

    let existing = &snapshot.issues[0];
    let reply = serde_json::json!([
        {"summary": existing.summary, "description": existing.description, "rationale": "restated"},
        {"summary": "Publish a public status page", "description": "Show uptime and incidents.", "rationale": "gap"},
    ])
    .to_string();
    let scripted = Suggester::new(Arc::new(MockChatProvider::with_responses(vec![reply])));
    let kept = scripted.suggest_new_issues(&request, &snapshot, &embedder, &engine)?;
    println!(
        "\nscripted reply: 2 suggestions, {} kept after the redundancy filter",
        kept.len()
    );
    for s in kept {
        println!("  {}", s.summary);
    }
    Ok(())
}
