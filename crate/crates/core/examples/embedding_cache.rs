//! Persist embeddings to disk so a second run makes no provider calls.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use backlog_groom::embedding::{
    EmbedError, Embedder, EmbeddingCache, EmbeddingProvider, EmbeddingVector, LocalHashProvider,
};

/// Wraps the local provider and counts how many texts reach it.
struct Counting {
    inner: LocalHashProvider,
    texts: AtomicUsize,
}

impl EmbeddingProvider for Counting {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        self.texts.fetch_add(texts.len(), Ordering::SeqCst);
        self.inner.embed_many(texts)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cache_file = dir.path().join("embeddings.cache");
    let texts = [
        "Cart total ignores discount codes",
        "Search returns no results for accented names",
    ];

    for run in 1..=2 {
        let provider = Arc::new(Counting {
            inner: LocalHashProvider::new(256),
            texts: AtomicUsize::new(0),
        });
        let embedder = Embedder::new(provider.clone()).with_cache(Some(EmbeddingCache::open(&cache_file)?));
        let vectors = embedder.embed_batch(&texts)?;
        println!(
            "run {run}: {} vectors, {} provider calls for texts",
            vectors.len(),
            provider.texts.load(Ordering::SeqCst)
        );
    }
    println!(
        "\ncache file:\n{}",
        std::fs::read_to_string(&cache_file)?
            .lines()
            .map(|l| &l[..l.len().min(60)])
            .collect::<Vec<_>>()
            .join("...\n")
    );
    Ok(())
}
