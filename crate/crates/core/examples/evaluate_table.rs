//! Recompute a results table from raw confusion counts, and the
//! time-per-duplicate comparison.

use backlog_groom::eval::{
    efficiency_comparison, metrics, render_confusion_matrix, report_csv, ConfusionMatrix, ReportRow,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // (participant, tp, fp, fn, tn, minutes)
    let runs = [
        ("#8 Manual", 8, 1, 33, 1233, 25),
        ("#11 Manual", 12, 1, 29, 1233, 24),
        ("#11 Auto", 20, 0, 21, 1234, 12),
        ("#9 Auto", 21, 0, 20, 1234, 15),
    ];
    let rows: Vec<ReportRow> = runs
        .iter()
        .map(|&(name, tp, fp, fn_, tn, min)| {
            let cm = ConfusionMatrix { tp, fp, fn_, tn };
            ReportRow::new(name, &cm, &metrics(&cm, f64::from(min) * 60.0))
        })
        .collect();
    print!("{}", report_csv(&rows));

    let tool_only = ConfusionMatrix {
        tp: 35,
        fp: 8,
        fn_: 6,
        tn: 1226,
    };
    println!("\nunattended run:\n{}", render_confusion_matrix(&tool_only));

    let saved = efficiency_comparison(174.0, 95.0)?;
    println!("time per duplicate: 174 s manual vs 95 s assisted -> {saved:.2}% less");
    Ok(())
}
