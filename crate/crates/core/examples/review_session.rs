//! A human-in-the-loop session against a scratch copy of the bundled
//! fixture: accept one candidate, edit another, reject the rest, apply, and
//! score the result.

use std::sync::Arc;

use backlog_groom::clock::SystemClock;
use backlog_groom::dedup::EngineConfig;
use backlog_groom::embedding::Embedder;
use backlog_groom::eval::{load_ground_truth, render_confusion_matrix};
use backlog_groom::gateway::{BacklogGateway, FixtureGateway};
use backlog_groom::review::{Decision, ReviewService, SessionMode};
use backlog_groom::suggest::Suggester;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let dir = tempfile::tempdir()?;
    let backlog = dir.path().join("backlog.json");
    std::fs::copy(format!("{fixtures}/backlog51.json"), &backlog)?;

    let gateway = Arc::new(FixtureGateway::new(&backlog, Arc::new(SystemClock)));
    let truth = load_ground_truth(format!("{fixtures}/truth51.csv"), Some(&gateway.fetch_backlog()?))?;
    let service = ReviewService::new(
        gateway.clone(),
        Arc::new(Embedder::local(256)),
        Arc::new(Suggester::mock()),
        EngineConfig::with_threshold(0.65),
        Arc::new(SystemClock),
    )
    .with_ground_truth(Some(truth));

    let session = service.start_session(SessionMode::Interactive, None)?;
    let id = &session.session_id;
    println!("session {id}: {} candidates", session.candidates.len());

    for (i, row) in service.candidate_rows(id)?.iter().enumerate() {
        let decision = match i {
            0 => Decision::accept(&row.id),
            1 => Decision::modify(
                &row.id,
                format!("{} (merged)", row.summary_a),
                "Edited during review.",
            ),
            _ => Decision::reject(&row.id),
        };
        service.record_decision(id, decision)?;
    }

    let report = service.apply_session(id)?;
    println!(
        "applied {} merge(s) in {:.1}s",
        report.receipts.len(),
        report.time_seconds
    );
    for receipt in &report.receipts {
        for step in &receipt.steps {
            println!("  {:<8} {:?} {:?}", step.target, step.step, step.outcome);
        }
    }
    if let Some(cm) = &report.confusion {
        print!("\n{}", render_confusion_matrix(cm));
    }
    Ok(())
}
