//! Text-to-vector providers behind a caching, batching front end.

mod cache;
mod local;
mod remote;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, EmbeddingCache};
pub use local::{fnv1a64, local_hash_embed, normalize, LocalHashProvider, DEFAULT_DIM};
pub use remote::RemoteEmbeddingProvider;

use crate::http::{HttpTransport, UreqTransport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed blank text")]
    EmptyText,
    #[error("text has fewer than three characters after normalization")]
    DegenerateText,
    #[error("embedding provider failed after {attempts} attempt(s) (status {status:?}): {message}")]
    Provider {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("item {index}: {source}")]
    Batch { index: usize, source: Box<EmbedError> },
    #[error("vector contains a non-finite value or is empty")]
    InvalidVector,
    #[error("embedding configuration: {0}")]
    Config(String),
    #[error("embedding cache: {0}")]
    Cache(String),
}

impl EmbedError {
    /// Strips batch wrapping to reach the per-item cause.
    pub fn root(&self) -> &EmbedError {
        match self {
            EmbedError::Batch { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Fixed-dimension vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidVector);
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// One round-trip to a model. Implementations must be safe for concurrent
/// calls.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn model_name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Embeds `texts` in a single provider call, preserving order. Per-item
    /// failures are reported as [`EmbedError::Batch`] with the item's
    /// position in `texts`.
    fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    RemoteApi,
    LocalHash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingProviderConfig {
    pub provider: ProviderKind,
    pub model_name: String,
    pub dim: usize,
    pub max_batch: usize,
    pub request_timeout: Duration,
    pub max_parallel_requests: usize,
    pub api_url: Option<String>,
    pub api_key: Option<String>,
    /// Persistent cache file; `None` keeps the cache in memory only.
    pub cache_path: Option<PathBuf>,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        EmbeddingProviderConfig {
            provider: ProviderKind::LocalHash,
            model_name: "trigram-fnv1a".into(),
            dim: DEFAULT_DIM,
            max_batch: 32,
            request_timeout: Duration::from_secs(30),
            max_parallel_requests: 4,
            api_url: None,
            api_key: None,
            cache_path: None,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be positive".into()));
        }
        if self.max_batch == 0 {
            return Err(EmbedError::Config("max_batch must be at least 1".into()));
        }
        if self.max_parallel_requests == 0 {
            return Err(EmbedError::Config(
                "max_parallel_requests must be at least 1".into(),
            ));
        }
        if self.provider == ProviderKind::RemoteApi && self.api_url.is_none() {
            return Err(EmbedError::Config(
                "remote provider needs an endpoint (EMBED_API_URL)".into(),
            ));
        }
        Ok(())
    }
}

type BatchResult = Result<Vec<EmbeddingVector>, EmbedError>;

/// Caching, batching front end over an [`EmbeddingProvider`].
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: Option<EmbeddingCache>,
    max_batch: usize,
    max_parallel: usize,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Embedder {
            provider,
            cache: Some(EmbeddingCache::in_memory()),
            max_batch: 32,
            max_parallel: 4,
        }
    }

    /// Deterministic offline embedder with an in-memory cache.
    pub fn local(dim: usize) -> Self {
        Embedder::new(Arc::new(LocalHashProvider::new(dim)))
    }

    pub fn from_config(config: &EmbeddingProviderConfig) -> Result<Self, EmbedError> {
        let transport = Arc::new(UreqTransport::new(config.request_timeout));
        Embedder::from_config_with_transport(config, transport)
    }

    pub fn from_config_with_transport(
        config: &EmbeddingProviderConfig,
        transport: Arc<dyn HttpTransport>,
    ) -> Result<Self, EmbedError> {
        config.validate()?;
        let provider: Arc<dyn EmbeddingProvider> = match config.provider {
            ProviderKind::LocalHash => Arc::new(LocalHashProvider::new(config.dim)),
            ProviderKind::RemoteApi => Arc::new(RemoteEmbeddingProvider::new(
                transport,
                config.api_url.clone().unwrap_or_default(),
                config.api_key.clone(),
                config.model_name.clone(),
                config.dim,
            )),
        };
        let cache = match &config.cache_path {
            Some(path) => EmbeddingCache::open(path).map_err(|e| EmbedError::Cache(e.to_string()))?,
            None => EmbeddingCache::in_memory(),
        };
        Ok(Embedder::new(provider)
            .with_cache(Some(cache))
            .with_batching(config.max_batch, config.max_parallel_requests))
    }

    pub fn with_cache(mut self, cache: Option<EmbeddingCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_batching(mut self, max_batch: usize, max_parallel: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self.max_parallel = max_parallel.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    fn key(&self, text: &str) -> u64 {
        cache_key(
            self.provider.id(),
            self.provider.model_name(),
            self.provider.dim(),
            text,
        )
    }

    fn store(&self, text: &str, vector: &EmbeddingVector) -> Result<(), EmbedError> {
        match &self.cache {
            Some(cache) => cache
                .insert(self.key(text), vector)
                .map_err(|e| EmbedError::Cache(e.to_string())),
            None => Ok(()),
        }
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(self.key(text))) {
            return Ok(hit);
        }
        let vector = self
            .provider
            .embed_many(&[text])
            .map_err(unwrap_single)?
            .pop()
            .ok_or_else(|| EmbedError::Config("provider returned no vector".into()))?;
        self.store(text, &vector)?;
        Ok(vector)
    }

    /// Embeds every text, in input order. Cache misses are grouped into
    /// provider calls of at most `max_batch` texts, with at most
    /// `max_parallel` calls in flight. The first failing item (by input
    /// index) is reported.
    pub fn embed_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        for (index, text) in texts.iter().enumerate() {
            if text.as_ref().trim().is_empty() {
                return Err(EmbedError::Batch {
                    index,
                    source: Box::new(EmbedError::EmptyText),
                });
            }
        }
        let mut results: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        // distinct missing texts, remembering every position they fill
        let mut misses: Vec<(&str, Vec<usize>)> = Vec::new();
        let mut seen = std::collections::HashMap::new();
        for (index, text) in texts.iter().enumerate() {
            let text = text.as_ref();
            if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(self.key(text))) {
                results[index] = Some(hit);
                continue;
            }
            match seen.get(text) {
                Some(&slot) => {
                    let entry: &mut (&str, Vec<usize>) = &mut misses[slot];
                    entry.1.push(index);
                }
                None => {
                    seen.insert(text, misses.len());
                    misses.push((text, vec![index]));
                }
            }
        }

        let chunks: Vec<&[(&str, Vec<usize>)]> = misses.chunks(self.max_batch).collect();
        // One slot per chunk, filled by whichever worker takes it.
        let outcomes: Vec<Mutex<Option<BatchResult>>> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_parallel.min(chunks.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(chunk) = chunks.get(i) else { break };
                    let batch: Vec<&str> = chunk.iter().map(|(t, _)| *t).collect();
                    let outcome = self.provider.embed_many(&batch);
                    *outcomes[i].lock().expect("outcome lock poisoned") = Some(outcome);
                });
            }
        });

        let mut first_error: Option<(usize, EmbedError)> = None;
        for (chunk, outcome) in chunks.iter().zip(outcomes) {
            let outcome = outcome
                .into_inner()
                .expect("outcome lock poisoned")
                .expect("every chunk processed");
            match outcome {
                Ok(vectors) if vectors.len() == chunk.len() => {
                    for ((text, positions), vector) in chunk.iter().zip(vectors) {
                        self.store(text, &vector)?;
                        for &p in positions {
                            results[p] = Some(vector.clone());
                        }
                    }
                }
                Ok(vectors) => {
                    let err = EmbedError::Provider {
                        status: None,
                        attempts: 1,
                        message: format!("expected {} vectors, got {}", chunk.len(), vectors.len()),
                    };
                    record_first(&mut first_error, chunk[0].1[0], err);
                }
                Err(EmbedError::Batch { index, source }) => {
                    record_first(&mut first_error, chunk[index].1[0], *source);
                }
                Err(other) => record_first(&mut first_error, chunk[0].1[0], other),
            }
        }
        if let Some((index, source)) = first_error {
            return Err(EmbedError::Batch {
                index,
                source: Box::new(source),
            });
        }
        Ok(results
            .into_iter()
            .map(|r| r.expect("every position embedded"))
            .collect())
    }
}

fn record_first(slot: &mut Option<(usize, EmbedError)>, index: usize, err: EmbedError) {
    if slot.as_ref().is_none_or(|(i, _)| index < *i) {
        *slot = Some((index, err));
    }
}

fn unwrap_single(err: EmbedError) -> EmbedError {
    match err {
        EmbedError::Batch { index: 0, source } => *source,
        other => other,
    }
}
