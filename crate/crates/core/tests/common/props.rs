//! Property checks shared by the proptest suite and the acceptance runner.
//! Each check takes generated input and returns a `TestCaseError` on
//! violation so it can run under `proptest!` or a bare `TestRunner`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use backlog_groom::clock::FixedClock;
use backlog_groom::dedup::{
    cluster, detect_duplicates, DuplicateCandidate, EngineConfig, ReviewStatus, SurvivorRule,
};
use backlog_groom::embedding::{local_hash_embed, Embedder, EmbeddingVector};
use backlog_groom::gateway::{ApplyReceipt, BacklogGateway, GatewayError};
use backlog_groom::index::cosine;
use backlog_groom::model::{
    canonicalize_pair, BacklogSnapshot, GroomingAction, Issue, IssuePair, IssueStatus,
};
use backlog_groom::review::{Decision, ReviewError, ReviewService, SessionMode};
use backlog_groom::suggest::{parse_merge_output, parse_model_output, Suggester};
use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

const VOCAB: &[&str] = &[
    "login", "checkout", "cart", "payment", "fails", "slow", "page", "button", "mobile", "search", "filter",
    "order", "email", "reset", "password", "crash", "timeout", "invoice", "export", "profile",
];

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap()
}

/// A sentence over a small vocabulary, so random backlogs contain
/// near-duplicates as well as unrelated items.
pub fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB), 2..8).prop_map(|w| w.join(" "))
}

pub fn backlog_texts(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(sentence(), 2..=max)
}

pub fn snapshot_of(texts: &[String]) -> BacklogSnapshot {
    let issues = texts
        .iter()
        .enumerate()
        .map(|(i, text)| Issue {
            key: format!("P-{}", i + 1),
            summary: text.clone(),
            description: String::new(),
            status: IssueStatus::Open,
            labels: BTreeSet::new(),
            created_at: t0() + Duration::minutes(i as i64),
            updated_at: t0() + Duration::minutes(i as i64),
        })
        .collect();
    BacklogSnapshot::new("P", issues, t0()).expect("valid snapshot")
}

pub fn nonzero_vector(dim: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn vector(values: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(values.to_vec()).expect("finite")
}

/// cosine(u, v) == cosine(v, u), lies in [-1, 1], and is unchanged by
/// positive rescaling of either side.
pub fn cosine_laws((u, v, scale): (Vec<f64>, Vec<f64>, f64)) -> Result<(), TestCaseError> {
    let n = u.len().min(v.len());
    let (u, v) = (&u[..n], &v[..n]);
    let uv = cosine(&vector(u), &vector(v)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let vu = cosine(&vector(v), &vector(u)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(uv, vu);
    prop_assert!((-1.0..=1.0).contains(&uv));
    let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
    let s = cosine(&vector(&scaled), &vector(v)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((s - uv).abs() < 1e-9, "scaled {} vs {}", s, uv);
    let self_sim = cosine(&vector(u), &vector(u)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((self_sim - 1.0).abs() < 1e-12);
    Ok(())
}

pub fn cosine_input() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..24).prop_flat_map(|d| {
        (
            nonzero_vector(d..d + 1),
            nonzero_vector(d..d + 1),
            0.01f64..1000.0,
        )
    })
}

fn detected(
    snapshot: &BacklogSnapshot,
    embedder: &Embedder,
    t: f64,
) -> Result<BTreeSet<IssuePair>, TestCaseError> {
    Ok(
        detect_duplicates(snapshot, embedder, &EngineConfig::with_threshold(t))
            .map_err(|e| TestCaseError::fail(e.to_string()))?
            .into_iter()
            .map(|c| c.pair)
            .collect(),
    )
}

/// Raising the threshold never adds detections.
pub fn threshold_monotonic((texts, a, b): (Vec<String>, f64, f64)) -> Result<(), TestCaseError> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let snapshot = snapshot_of(&texts);
    let embedder = Embedder::local(256);
    let low = detected(&snapshot, &embedder, lo)?;
    let high = detected(&snapshot, &embedder, hi)?;
    prop_assert!(
        high.is_subset(&low),
        "{} pairs at {} not all in {} pairs at {}",
        high.len(),
        hi,
        low.len(),
        lo
    );
    Ok(())
}

pub fn monotonic_input() -> impl Strategy<Value = (Vec<String>, f64, f64)> {
    (backlog_texts(25), 0.05f64..=1.0, 0.05f64..=1.0)
}

/// Clusters partition exactly the keys touched by the accepted pairs, each
/// pair lands inside one cluster, and every cluster is connected by its
/// supporting pairs.
pub fn clusters_partition((n, edges): (usize, Vec<(usize, usize)>)) -> Result<(), TestCaseError> {
    let texts: Vec<String> = (0..n).map(|i| format!("issue number {i}")).collect();
    let snapshot = snapshot_of(&texts);
    let key = |i: usize| format!("P-{}", i % n + 1);
    let accepted: Vec<DuplicateCandidate> = edges
        .iter()
        .filter(|(a, b)| a % n != b % n)
        .map(|(a, b)| DuplicateCandidate {
            pair: IssuePair::new(key(*a), key(*b)).expect("distinct"),
            score: 0.9,
            status: ReviewStatus::Accepted,
            proposed_action: None,
        })
        .collect();
    let clusters = cluster(&accepted, &snapshot, SurvivorRule::EarliestCreated)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let touched: BTreeSet<String> = accepted
        .iter()
        .flat_map(|c| [c.pair.a().to_string(), c.pair.b().to_string()])
        .collect();
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        prop_assert!(c.members.len() >= 2);
        prop_assert!(c.members.contains(&c.survivor));
        for m in &c.members {
            prop_assert!(owner.insert(m.as_str(), i).is_none(), "{} in two clusters", m);
        }
    }
    prop_assert_eq!(
        owner.keys().map(|k| k.to_string()).collect::<BTreeSet<_>>(),
        touched
    );
    for c in &accepted {
        prop_assert_eq!(owner[c.pair.a()], owner[c.pair.b()]);
    }
    for c in &clusters {
        // Walk the supporting pairs from the survivor; every member must be reached.
        let mut seen = BTreeSet::from([c.survivor.clone()]);
        loop {
            let before = seen.len();
            for p in &c.supporting_pairs {
                if seen.contains(p.pair.a()) || seen.contains(p.pair.b()) {
                    seen.insert(p.pair.a().to_string());
                    seen.insert(p.pair.b().to_string());
                }
            }
            if seen.len() == before {
                break;
            }
        }
        prop_assert_eq!(&seen, &c.members);
    }
    Ok(())
}

pub fn partition_input() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..30, prop::collection::vec((0usize..30, 0usize..30), 0..40))
}

/// Pair canonicalization ignores argument order and is a fixed point.
pub fn canonical_pair((a, b): (String, String)) -> Result<(), TestCaseError> {
    match (
        canonicalize_pair(a.clone(), b.clone()),
        canonicalize_pair(b.clone(), a.clone()),
    ) {
        (Ok(p), Ok(q)) => {
            prop_assert_eq!(&p, &q);
            prop_assert!(p.a() < p.b());
            let again = canonicalize_pair(p.a(), p.b()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&again, &p);
            let again = canonicalize_pair(p.b(), p.a()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&again, &p);
        }
        (Err(_), Err(_)) => prop_assert!(a == b || a.is_empty() || b.is_empty()),
        _ => prop_assert!(false, "order-dependent validity for {:?}, {:?}", a, b),
    }
    Ok(())
}

pub fn pair_input() -> impl Strategy<Value = (String, String)> {
    ("[A-Z]{0,3}-?[0-9]{0,3}", "[A-Z]{0,3}-?[0-9]{0,3}")
}

/// LocalHash vectors have unit length and are a pure function of the text.
pub fn local_hash_unit((text, dim): (String, usize)) -> Result<(), TestCaseError> {
    match local_hash_embed(&text, dim) {
        Ok(v) => {
            prop_assert_eq!(v.dim(), dim);
            prop_assert!((v.norm() - 1.0).abs() < 1e-12, "norm {}", v.norm());
            let again = local_hash_embed(&text, dim).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(v, again);
        }
        // Only texts with fewer than three normalized characters are refused.
        Err(_) => prop_assert!(backlog_groom::embedding::normalize(&text).chars().count() < 3),
    }
    Ok(())
}

pub fn local_hash_input() -> impl Strategy<Value = (String, usize)> {
    (prop_oneof![".{0,80}", sentence()], 1usize..512)
}

/// The reply parsers return a value or an error for any input; they never
/// panic and never yield an empty summary.
pub fn parser_total(raw: String) -> Result<(), TestCaseError> {
    if let Ok(items) = parse_model_output(&raw) {
        prop_assert!(items.iter().all(|s| !s.summary.trim().is_empty()));
    }
    if let Ok((summary, _)) = parse_merge_output(&raw) {
        prop_assert!(!summary.trim().is_empty());
    }
    Ok(())
}

/// Raw strings, plus near-valid JSON with fences and wrong field types.
pub fn model_output() -> impl Strategy<Value = String> {
    let field = prop_oneof![
        Just("\"x\"".to_string()),
        Just("\"\"".to_string()),
        Just("  ".to_string()),
        Just("1".to_string()),
        Just("null".to_string()),
        Just("[]".to_string()),
    ];
    let obj = (field.clone(), field.clone(), field, prop::bool::ANY).prop_map(|(s, d, r, extra)| {
        let extra = if extra { ",\"x\":{}" } else { "" };
        format!("{{\"summary\":{s},\"description\":{d},\"rationale\":{r}{extra}}}")
    });
    let array = prop::collection::vec(obj.clone(), 0..4).prop_map(|v| format!("[{}]", v.join(",")));
    let json = prop_oneof![array, obj];
    let fenced = (
        json.clone(),
        prop::sample::select(vec!["", "```", "```json", "```json\n"]),
        prop::bool::ANY,
    )
        .prop_map(|(j, open, close)| format!("{open}{j}{}", if close { "```" } else { "" }));
    prop_oneof![".*", json, fenced]
}

/// Gateway that records actions and otherwise does nothing.
pub struct RecordingGateway {
    pub snapshot: BacklogSnapshot,
    pub applied: Mutex<Vec<GroomingAction>>,
}

impl RecordingGateway {
    pub fn new(snapshot: BacklogSnapshot) -> Self {
        RecordingGateway {
            snapshot,
            applied: Mutex::new(Vec::new()),
        }
    }
}

impl BacklogGateway for RecordingGateway {
    fn fetch_backlog(&self) -> Result<BacklogSnapshot, GatewayError> {
        Ok(self.snapshot.clone())
    }

    fn apply_action(&self, action: &GroomingAction) -> Result<ApplyReceipt, GatewayError> {
        self.applied.lock().unwrap().push(action.clone());
        Ok(ApplyReceipt::new(action.clone()))
    }
}

/// 0 = leave undecided, 1 = accept, 2 = reject.
pub type GateInput = (Vec<String>, f64, Vec<u8>);

pub fn gate_input() -> impl Strategy<Value = GateInput> {
    (
        backlog_texts(20),
        0.3f64..0.95,
        prop::collection::vec(0u8..3, 0..60),
    )
}

/// Apply touches only issues in clusters built from accepted candidates;
/// with nothing accepted it touches nothing at all.
pub fn confirmation_gate((texts, threshold, choices): GateInput) -> Result<(), TestCaseError> {
    let gateway = Arc::new(RecordingGateway::new(snapshot_of(&texts)));
    let service = ReviewService::new(
        gateway.clone(),
        Arc::new(Embedder::local(256)),
        Arc::new(Suggester::mock()),
        EngineConfig::with_threshold(threshold),
        Arc::new(FixedClock(t0())),
    );
    let session = service
        .start_session(SessionMode::Interactive, None)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut allowed: Vec<DuplicateCandidate> = Vec::new();
    for (entry, choice) in session
        .candidates
        .iter()
        .zip(choices.iter().chain(std::iter::repeat(&0)))
    {
        let decision = match choice {
            1 => Decision::accept(&entry.id),
            2 => Decision::reject(&entry.id),
            _ => continue,
        };
        let status = service
            .record_decision(&session.session_id, decision)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        if status == ReviewStatus::Accepted {
            allowed.push(entry.candidate.clone());
        }
    }
    prop_assert!(
        gateway.applied.lock().unwrap().is_empty(),
        "mutation before apply"
    );
    let result = service.apply_session(&session.session_id);
    let applied = gateway.applied.lock().unwrap().clone();
    if allowed.is_empty() {
        prop_assert!(
            matches!(result, Err(ReviewError::NothingToApply)),
            "{:?}",
            result.err()
        );
        prop_assert!(applied.is_empty());
        return Ok(());
    }
    result.map_err(|e| TestCaseError::fail(e.to_string()))?;
    let expected = cluster(&allowed, &session.snapshot, SurvivorRule::EarliestCreated)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let allowed_keys: BTreeSet<&str> = expected
        .iter()
        .flat_map(|c| c.members.iter().map(String::as_str))
        .collect();
    prop_assert_eq!(applied.len(), expected.len());
    for action in &applied {
        let is_merge = matches!(action, GroomingAction::MergeCluster { .. });
        prop_assert!(is_merge, "unexpected action {:?}", action);
        for target in action.targets() {
            prop_assert!(allowed_keys.contains(target), "{} was never accepted", target);
        }
    }
    Ok(())
}
