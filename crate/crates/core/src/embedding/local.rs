//! Deterministic character-trigram feature hashing embedder.
//!
//! Text is lowercased, every non-alphanumeric code point becomes a space,
//! space runs collapse and the ends are trimmed. Each overlapping character
//! trigram is hashed with 64-bit FNV-1a over its UTF-8 bytes and counted in
//! bucket `hash % dim`; the count vector is then L2-normalized. The output
//! depends only on `(text, dim)`.

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};

pub const FNV_OFFSET_BASIS: u64 = 14_695_981_039_346_656_037;
pub const FNV_PRIME: u64 = 1_099_511_628_211;
pub const DEFAULT_DIM: usize = 256;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn local_hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    if dim == 0 {
        return Err(EmbedError::Config("dimension must be positive".into()));
    }
    let chars: Vec<char> = normalize(text).chars().collect();
    if chars.len() < 3 {
        return Err(EmbedError::DegenerateText);
    }
    let mut values = vec![0.0f64; dim];
    let mut buf = [0u8; 12];
    for window in chars.windows(3) {
        let mut len = 0;
        for c in window {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let bucket = (fnv1a64(&buf[..len]) % dim as u64) as usize;
        values[bucket] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector::new(values)
}

#[derive(Debug, Clone)]
pub struct LocalHashProvider {
    dim: usize,
}

impl LocalHashProvider {
    pub fn new(dim: usize) -> Self {
        LocalHashProvider { dim }
    }
}

impl Default for LocalHashProvider {
    fn default() -> Self {
        LocalHashProvider::new(DEFAULT_DIM)
    }
}

impl EmbeddingProvider for LocalHashProvider {
    fn id(&self) -> &str {
        "local-hash"
    }

    fn model_name(&self) -> &str {
        "trigram-fnv1a"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, text)| {
                local_hash_embed(text, self.dim).map_err(|e| EmbedError::Batch {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        // Frozen from the reference script in fixtures/tools.
        assert_eq!(fnv1a64(b"abc"), 16_654_208_175_385_433_931);
    }

    #[test]
    fn single_trigram_hits_one_bucket() {
        let v = local_hash_embed("abc", 256).unwrap();
        let nonzero: Vec<_> = v
            .values()
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .collect();
        assert_eq!(nonzero, vec![(75, &1.0)]);
        assert_eq!(fnv1a64(b"abc") % 256, 75);
    }

    #[test]
    fn normalization_collapses_case_and_punctuation() {
        assert_eq!(normalize("  Fix   LOGIN bug!! "), "fix login bug");
        assert_eq!(
            local_hash_embed("Fix login bug!!", 256).unwrap(),
            local_hash_embed("fix LOGIN bug", 256).unwrap()
        );
    }

    #[test]
    fn unit_norm() {
        let v = local_hash_embed("Password reset email is never sent", 256).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_empty_inputs() {
        assert_eq!(local_hash_embed("", 256), Err(EmbedError::EmptyText));
        assert_eq!(local_hash_embed("   ", 256), Err(EmbedError::EmptyText));
        assert_eq!(local_hash_embed("ab", 256), Err(EmbedError::DegenerateText));
        assert_eq!(local_hash_embed("a!!", 256), Err(EmbedError::DegenerateText));
        assert_eq!(local_hash_embed("!!!", 256), Err(EmbedError::DegenerateText));
    }

    #[test]
    fn trigrams_span_spaces_and_multibyte_chars() {
        // "a b" is one trigram including the space; "äöü" is one 6-byte trigram.
        let v = local_hash_embed("a b", 64).unwrap();
        assert_eq!(v.values()[(fnv1a64(b"a b") % 64) as usize], 1.0);
        let w = local_hash_embed("ÄÖÜ", 64).unwrap();
        assert_eq!(w.values()[(fnv1a64("äöü".as_bytes()) % 64) as usize], 1.0);
    }
}
