//! Embed a free-text query and list the closest backlog issues.
//!
//!     cargo run --example nearest_issues -- "checkout crashes when paying"

use std::sync::Arc;

use backlog_groom::clock::SystemClock;
use backlog_groom::dedup::build_index;
use backlog_groom::embedding::Embedder;
use backlog_groom::gateway::{BacklogGateway, FixtureGateway};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "password reset email never arrives".to_string());
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backlog51.json");
    let snapshot = FixtureGateway::new(path, Arc::new(SystemClock)).fetch_backlog()?;

    let embedder = Embedder::local(256);
    let index = build_index(&snapshot, &embedder)?;
    let q = embedder.embed_text(&query)?;
    println!("query: {query}");
    for hit in index.top_k(&q, 5, None)? {
        let issue = snapshot.get(&hit.key).expect("indexed from snapshot");
        println!("  {:.3}  {:<8} {}", hit.score, hit.key, issue.summary);
    }
    Ok(())
}
