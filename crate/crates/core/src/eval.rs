//! Scoring predicted duplicate pairs against labeled ground truth.
//!
//! Everything is counted in pair space: a backlog of `n` issues has
//! `n(n-1)/2` unordered pairs, each either a duplicate or not. A resolved
//! cluster of `k` issues predicts all `C(k,2)` of its pairs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dedup::DuplicateCluster;
use crate::model::{canonicalize_pair, BacklogSnapshot, IssuePair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: issue {key} paired with itself")]
    SelfPair { path: PathBuf, line: usize, key: String },
    #[error("{0}: no \"#n=\" header and no companion fixture to count issues")]
    MissingIssueCount(PathBuf),
    #[error("ground truth declares n={declared} but the fixture has {actual} issues")]
    IssueCountMismatch { declared: usize, actual: usize },
    #[error("issue {0} is not part of the ground truth's backlog")]
    UnknownIssueKey(String),
    #[error("{pairs} pairs do not fit in the pair space of {n} issues")]
    PairSpaceOverflow { pairs: usize, n: usize },
    #[error("baseline time per duplicate must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub fn pair_space(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub n_issues: usize,
    pub true_pairs: BTreeSet<IssuePair>,
    /// Keys of the labeled backlog, when known; enables key checking.
    pub issue_keys: Option<BTreeSet<String>>,
}

impl GroundTruth {
    pub fn new(n_issues: usize, true_pairs: BTreeSet<IssuePair>) -> Result<Self, EvalError> {
        if true_pairs.len() > pair_space(n_issues) {
            return Err(EvalError::PairSpaceOverflow {
                pairs: true_pairs.len(),
                n: n_issues,
            });
        }
        Ok(GroundTruth {
            n_issues,
            true_pairs,
            issue_keys: None,
        })
    }

    /// Ground truth over a known backlog; every labeled key must exist in it.
    pub fn for_snapshot(
        snapshot: &BacklogSnapshot,
        true_pairs: BTreeSet<IssuePair>,
    ) -> Result<Self, EvalError> {
        let keys: BTreeSet<String> = snapshot.issues.iter().map(|i| i.key.clone()).collect();
        let mut truth = GroundTruth::new(keys.len(), true_pairs)?;
        truth.issue_keys = Some(keys);
        truth.check_keys(truth.true_pairs.iter())?;
        Ok(truth)
    }

    fn check_keys<'a>(&self, pairs: impl Iterator<Item = &'a IssuePair>) -> Result<(), EvalError> {
        let Some(keys) = &self.issue_keys else {
            return Ok(());
        };
        for pair in pairs {
            for key in [pair.a(), pair.b()] {
                if !keys.contains(key) {
                    return Err(EvalError::UnknownIssueKey(key.to_string()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn score(predicted: &BTreeSet<IssuePair>, truth: &GroundTruth) -> Result<ConfusionMatrix, EvalError> {
    truth.check_keys(predicted.iter())?;
    let tp = predicted.intersection(&truth.true_pairs).count();
    let fp = predicted.len() - tp;
    let fn_ = truth.true_pairs.len() - tp;
    let total = pair_space(truth.n_issues);
    let used = tp + fp + fn_;
    if used > total {
        return Err(EvalError::PairSpaceOverflow {
            pairs: used,
            n: truth.n_issues,
        });
    }
    Ok(ConfusionMatrix {
        tp,
        fp,
        fn_,
        tn: total - used,
    })
}

/// All pairs implied by a set of resolved clusters.
pub fn cluster_pairs(clusters: &[DuplicateCluster]) -> BTreeSet<IssuePair> {
    clusters
        .iter()
        .flat_map(DuplicateCluster::expanded_pairs)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub time_seconds: f64,
    pub seconds_per_tp: Option<f64>,
}

/// Precision is 1.0 when nothing was predicted, recall is 1.0 when there is
/// nothing to find, and accuracy is 1.0 over an empty pair space.
pub fn metrics(cm: &ConfusionMatrix, time_seconds: f64) -> MetricsReport {
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MetricsReport {
        precision,
        recall,
        accuracy,
        f1,
        time_seconds,
        seconds_per_tp: (cm.tp > 0).then(|| time_seconds / cm.tp as f64),
    }
}

/// Percentage by which the assisted time per duplicate undercuts the manual
/// one.
pub fn efficiency_comparison(
    manual_seconds_per_tp: f64,
    assisted_seconds_per_tp: f64,
) -> Result<f64, EvalError> {
    if !(manual_seconds_per_tp > 0.0) {
        return Err(EvalError::NonPositiveBaseline(manual_seconds_per_tp));
    }
    Ok(100.0 * (manual_seconds_per_tp - assisted_seconds_per_tp) / manual_seconds_per_tp)
}

struct PairFile {
    declared_n: Option<usize>,
    pairs: BTreeSet<IssuePair>,
}

/// Reads `issue_a,issue_b[,...]` rows. `#` lines are comments, except that
/// `#n=<count>` declares the number of issues. Extra columns are ignored and
/// repeated pairs collapse.
fn read_pair_file(path: &Path) -> Result<PairFile, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let parse_err = |line: usize, message: String| EvalError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut declared_n = None;
    let mut pairs = BTreeSet::new();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(n) = comment.trim().strip_prefix("n=") {
                let n = n
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad issue count {n:?}")))?;
                declared_n = Some(n);
            }
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let a = cols.next().unwrap_or_default();
        let b = cols.next().unwrap_or_default();
        if !seen_header && a == "issue_a" && b == "issue_b" {
            seen_header = true;
            continue;
        }
        if a.is_empty() || b.is_empty() {
            return Err(parse_err(line_no, "expected two issue keys".into()));
        }
        let pair = canonicalize_pair(a, b).map_err(|_| EvalError::SelfPair {
            path: path.to_path_buf(),
            line: line_no,
            key: a.to_string(),
        })?;
        pairs.insert(pair);
    }
    Ok(PairFile { declared_n, pairs })
}

/// Loads a ground-truth CSV. The issue count comes from the companion
/// fixture when given (and must agree with any `#n=` header), otherwise from
/// the header.
pub fn load_ground_truth(
    path: impl AsRef<Path>,
    companion: Option<&BacklogSnapshot>,
) -> Result<GroundTruth, EvalError> {
    let path = path.as_ref();
    let file = read_pair_file(path)?;
    match (companion, file.declared_n) {
        (Some(snapshot), declared) => {
            if let Some(declared) = declared.filter(|d| *d != snapshot.len()) {
                return Err(EvalError::IssueCountMismatch {
                    declared,
                    actual: snapshot.len(),
                });
            }
            GroundTruth::for_snapshot(snapshot, file.pairs)
        }
        (None, Some(n)) => GroundTruth::new(n, file.pairs),
        (None, None) => Err(EvalError::MissingIssueCount(path.to_path_buf())),
    }
}

/// Loads predicted pairs (same format as ground truth; a score column is
/// allowed and ignored).
pub fn load_predictions(path: impl AsRef<Path>) -> Result<BTreeSet<IssuePair>, EvalError> {
    read_pair_file(path.as_ref()).map(|f| f.pairs)
}

pub fn write_predictions(path: impl AsRef<Path>, pairs: &BTreeSet<IssuePair>) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut out = String::from("issue_a,issue_b\n");
    for pair in pairs {
        let _ = writeln!(out, "{},{}", pair.a(), pair.b());
    }
    std::fs::write(path, out).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One row of a results table, serialized with the column order of the
/// published comparison table. Ratios are rounded to 4 decimals here and
/// nowhere else.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    #[serde(rename = "Participant")]
    pub participant: String,
    #[serde(rename = "TP")]
    pub tp: usize,
    #[serde(rename = "FP")]
    pub fp: usize,
    #[serde(rename = "FN")]
    pub fn_: usize,
    #[serde(rename = "TN")]
    pub tn: usize,
    #[serde(rename = "Time (min)")]
    pub time_min: String,
    #[serde(rename = "Precision")]
    pub precision: String,
    #[serde(rename = "Recall")]
    pub recall: String,
    #[serde(rename = "Accuracy")]
    pub accuracy: String,
    #[serde(rename = "F1")]
    pub f1: String,
}

pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn fmt_minutes(seconds: f64) -> String {
    let min = seconds / 60.0;
    if min.fract() == 0.0 {
        format!("{min:.0}")
    } else {
        format!("{min:.2}")
    }
}

impl ReportRow {
    pub fn new(participant: impl Into<String>, cm: &ConfusionMatrix, m: &MetricsReport) -> Self {
        ReportRow {
            participant: participant.into(),
            tp: cm.tp,
            fp: cm.fp,
            fn_: cm.fn_,
            tn: cm.tn,
            time_min: fmt_minutes(m.time_seconds),
            precision: fmt4(m.precision),
            recall: fmt4(m.recall),
            accuracy: fmt4(m.accuracy),
            f1: fmt4(m.f1),
        }
    }
}

pub fn report_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// 2×2 table: actual class by row, predicted class by column.
pub fn render_confusion_matrix(cm: &ConfusionMatrix) -> String {
    let cells = [
        ("Actual Duplicate", cm.tp, cm.fn_),
        ("Actual Non-duplicate", cm.fp, cm.tn),
    ];
    let width = cells
        .iter()
        .flat_map(|(_, a, b)| [a.to_string().len(), b.to_string().len()])
        .max()
        .unwrap_or(1)
        .max("Predicted Non-duplicate".len());
    let mut out = format!(
        "{:<20}  {:>w$}  {:>w$}\n",
        "",
        "Predicted Duplicate",
        "Predicted Non-duplicate",
        w = width
    );
    for (label, a, b) in cells {
        let _ = writeln!(out, "{label:<20}  {a:>w$}  {b:>w$}", w = width);
    }
    out
}
