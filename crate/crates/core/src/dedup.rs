//! Duplicate detection over a backlog snapshot, clustering of confirmed
//! pairs, and drafting of merge resolutions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedder};
use crate::index::{validate_threshold, IndexError, IndexedItem, ScoredPair, VectorIndex};
use crate::model::{issue_text, BacklogSnapshot, GroomingAction, Issue, IssuePair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DedupError {
    #[error("need at least two issues to look for duplicates, found {0}")]
    TooFewIssues(usize),
    #[error("issue {0} is not in the snapshot")]
    UnknownIssueKey(String),
    #[error("embedding issue {key}: {source}")]
    Embedding { key: String, source: EmbedError },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("drafting merge text failed: {0}")]
    DraftingFailed(String),
    #[error("invalid cluster: {0}")]
    InvalidCluster(String),
    #[error("invalid engine config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewStatus {
    Proposed,
    Accepted,
    Rejected,
    Modified,
}

impl ReviewStatus {
    /// Accepted or Modified: the item takes part in apply.
    pub fn is_confirmed(self) -> bool {
        matches!(self, ReviewStatus::Accepted | ReviewStatus::Modified)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateCandidate {
    pub pair: IssuePair,
    pub score: f64,
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_action: Option<GroomingAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub members: BTreeSet<String>,
    pub survivor: String,
    pub supporting_pairs: Vec<ScoredPair>,
}

impl DuplicateCluster {
    pub fn absorbed(&self) -> Vec<String> {
        self.members
            .iter()
            .filter(|k| **k != self.survivor)
            .cloned()
            .collect()
    }

    /// The cluster expanded to every pair among its members, C(k, 2) pairs.
    pub fn expanded_pairs(&self) -> Vec<IssuePair> {
        let members: Vec<&String> = self.members.iter().collect();
        let mut pairs = Vec::new();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                pairs.push(IssuePair::new(a.as_str(), b.as_str()).expect("members distinct"));
            }
        }
        pairs
    }

    fn validate(&self) -> Result<(), DedupError> {
        if self.members.len() < 2 {
            return Err(DedupError::InvalidCluster(
                "a cluster needs at least two members".into(),
            ));
        }
        if !self.members.contains(&self.survivor) {
            return Err(DedupError::InvalidCluster(format!(
                "survivor {} is not a member",
                self.survivor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivorRule {
    EarliestCreated,
    LowestKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub duplicate_threshold: f64,
    pub new_issue_redundancy_threshold: f64,
    pub survivor_rule: SurvivorRule,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            duplicate_threshold: 0.80,
            new_issue_redundancy_threshold: 0.80,
            survivor_rule: SurvivorRule::EarliestCreated,
        }
    }
}

impl EngineConfig {
    /// Uses `threshold` for both duplicate detection and the new-issue
    /// redundancy filter.
    pub fn with_threshold(threshold: f64) -> Self {
        EngineConfig {
            duplicate_threshold: threshold,
            new_issue_redundancy_threshold: threshold,
            ..EngineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), DedupError> {
        for t in [self.duplicate_threshold, self.new_issue_redundancy_threshold] {
            validate_threshold(t).map_err(|e| DedupError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Embeds every issue of the snapshot into a fresh index.
pub fn build_index(snapshot: &BacklogSnapshot, embedder: &Embedder) -> Result<VectorIndex, DedupError> {
    let texts: Vec<String> = snapshot.issues.iter().map(issue_text).collect();
    let vectors = embedder.embed_batch(&texts).map_err(|e| match e {
        EmbedError::Batch { index, source } => DedupError::Embedding {
            key: snapshot.issues[index].key.clone(),
            source: *source,
        },
        other => DedupError::Embedding {
            key: String::new(),
            source: other,
        },
    })?;
    let mut index = VectorIndex::new();
    for (issue, vector) in snapshot.issues.iter().zip(vectors) {
        index.upsert(IndexedItem {
            key: issue.key.clone(),
            vector,
        })?;
    }
    Ok(index)
}

pub fn detect_duplicates(
    snapshot: &BacklogSnapshot,
    embedder: &Embedder,
    config: &EngineConfig,
) -> Result<Vec<DuplicateCandidate>, DedupError> {
    config.validate()?;
    if snapshot.len() < 2 {
        return Err(DedupError::TooFewIssues(snapshot.len()));
    }
    let index = build_index(snapshot, embedder)?;
    Ok(index
        .pairwise_scan(config.duplicate_threshold)?
        .into_iter()
        .map(|hit| DuplicateCandidate {
            pair: hit.pair,
            score: hit.score,
            status: ReviewStatus::Proposed,
            proposed_action: None,
        })
        .collect())
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

pub fn choose_survivor<'a>(
    members: impl IntoIterator<Item = &'a Issue>,
    rule: SurvivorRule,
) -> Option<&'a Issue> {
    members.into_iter().min_by(|a, b| match rule {
        SurvivorRule::EarliestCreated => a.created_at.cmp(&b.created_at).then_with(|| a.key.cmp(&b.key)),
        SurvivorRule::LowestKey => a.key.cmp(&b.key),
    })
}

/// Groups the given pairs into connected components of size >= 2.
/// Clusters come back ordered by their lowest member key.
pub fn cluster(
    accepted: &[DuplicateCandidate],
    snapshot: &BacklogSnapshot,
    rule: SurvivorRule,
) -> Result<Vec<DuplicateCluster>, DedupError> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for cand in accepted {
        for key in [cand.pair.a(), cand.pair.b()] {
            if snapshot.get(key).is_none() {
                return Err(DedupError::UnknownIssueKey(key.to_string()));
            }
            let next = ids.len();
            ids.entry(key).or_insert(next);
        }
    }
    let mut uf = UnionFind::new(ids.len());
    for cand in accepted {
        uf.union(ids[cand.pair.a()], ids[cand.pair.b()]);
    }
    let mut groups: BTreeMap<usize, (BTreeSet<String>, Vec<ScoredPair>)> = BTreeMap::new();
    let mut root_of: HashMap<&str, usize> = HashMap::new();
    for (&key, &id) in &ids {
        let root = uf.find(id);
        root_of.insert(key, root);
        groups.entry(root).or_default().0.insert(key.to_string());
    }
    for cand in accepted {
        let root = root_of[cand.pair.a()];
        groups
            .get_mut(&root)
            .expect("root registered")
            .1
            .push(ScoredPair {
                pair: cand.pair.clone(),
                score: cand.score,
            });
    }
    let mut clusters: Vec<DuplicateCluster> = groups
        .into_values()
        .filter(|(members, _)| members.len() >= 2)
        .map(|(members, mut supporting_pairs)| {
            supporting_pairs.sort_by(|x, y| x.pair.cmp(&y.pair));
            supporting_pairs.dedup_by(|x, y| x.pair == y.pair);
            let survivor = choose_survivor(
                members.iter().map(|k| snapshot.get(k).expect("checked above")),
                rule,
            )
            .expect("non-empty cluster")
            .key
            .clone();
            DuplicateCluster {
                members,
                survivor,
                supporting_pairs,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.members.iter().next().cmp(&b.members.iter().next()));
    Ok(clusters)
}

/// Produces the final summary and description for a merged issue.
pub trait MergeDrafter: Send + Sync {
    fn draft_merge(&self, survivor: &Issue, absorbed: &[&Issue]) -> Result<(String, String), DedupError>;
}

/// Keeps the survivor's summary and appends a provenance trailer plus the
/// absorbed issues' descriptions.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackDrafter;

impl MergeDrafter for FallbackDrafter {
    fn draft_merge(&self, survivor: &Issue, absorbed: &[&Issue]) -> Result<(String, String), DedupError> {
        let mut absorbed: Vec<&Issue> = absorbed.to_vec();
        absorbed.sort_by(|a, b| a.key.cmp(&b.key));
        let keys: Vec<&str> = absorbed.iter().map(|i| i.key.as_str()).collect();
        let mut description = survivor.description.clone();
        if !description.is_empty() {
            description.push_str("\n\n");
        }
        description.push_str("Merged from: ");
        description.push_str(&keys.join(", "));
        for issue in absorbed.iter().filter(|i| !i.description.is_empty()) {
            description.push_str(&format!("\n\n[{}] {}", issue.key, issue.description));
        }
        Ok((survivor.summary.clone(), description))
    }
}

pub fn propose_resolution(
    cluster: &DuplicateCluster,
    snapshot: &BacklogSnapshot,
    drafter: &dyn MergeDrafter,
) -> Result<GroomingAction, DedupError> {
    cluster.validate()?;
    let lookup = |k: &str| {
        snapshot
            .get(k)
            .ok_or_else(|| DedupError::UnknownIssueKey(k.to_string()))
    };
    let survivor = lookup(&cluster.survivor)?;
    let absorbed_keys = cluster.absorbed();
    let absorbed = absorbed_keys
        .iter()
        .map(|k| lookup(k))
        .collect::<Result<Vec<_>, _>>()?;
    let (summary, description) = drafter.draft_merge(survivor, &absorbed)?;
    Ok(GroomingAction::MergeCluster {
        survivor: cluster.survivor.clone(),
        absorbed: absorbed_keys,
        summary,
        description,
    })
}

/// Tries `drafter`, falling back to [`FallbackDrafter`] when drafting fails.
pub fn propose_resolution_with_fallback(
    cluster: &DuplicateCluster,
    snapshot: &BacklogSnapshot,
    drafter: &dyn MergeDrafter,
) -> Result<GroomingAction, DedupError> {
    match propose_resolution(cluster, snapshot, drafter) {
        Err(DedupError::DraftingFailed(reason)) => {
            log::warn!("merge drafting failed ({reason}); using fallback text");
            propose_resolution(cluster, snapshot, &FallbackDrafter)
        }
        other => other,
    }
}
