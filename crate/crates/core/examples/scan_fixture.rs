//! Scan the bundled 51-issue backlog for duplicates and group the hits into
//! merge clusters.
//!
//!     cargo run --example scan_fixture -- 0.65

use std::sync::Arc;

use backlog_groom::clock::SystemClock;
use backlog_groom::dedup::{cluster, detect_duplicates, EngineConfig};
use backlog_groom::embedding::Embedder;
use backlog_groom::gateway::{BacklogGateway, FixtureGateway};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let threshold: f64 = std::env::args()
        .nth(1)
        .map(|t| t.parse())
        .transpose()?
        .unwrap_or(0.65);
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backlog51.json");
    let snapshot = FixtureGateway::new(path, Arc::new(SystemClock)).fetch_backlog()?;

    let engine = EngineConfig::with_threshold(threshold);
    let candidates = detect_duplicates(&snapshot, &Embedder::local(256), &engine)?;
    println!(
        "{} issues, {} candidate pairs at {threshold}",
        snapshot.len(),
        candidates.len()
    );
    for c in candidates.iter().take(10) {
        let title = |k: &str| snapshot.get(k).map(|i| i.summary.as_str()).unwrap_or("?");
        println!(
            "  {:.3}  {:<8} {:<45} | {}",
            c.score,
            c.pair.a(),
            title(c.pair.a()),
            title(c.pair.b())
        );
    }

    // Auto mode: treat every candidate as accepted.
    let clusters = cluster(&candidates, &snapshot, engine.survivor_rule)?;
    println!("\n{} merge clusters:", clusters.len());
    for c in &clusters {
        println!("  keep {:<8} absorb {:?}", c.survivor, c.absorbed());
    }
    Ok(())
}
