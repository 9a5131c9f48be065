//! Client for an OpenAI-style `/embeddings` endpoint.

use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::http::{HttpRequest, HttpTransport, Method, RetryPolicy};

pub struct RemoteEmbeddingProvider {
    transport: Arc<dyn HttpTransport>,
    url: String,
    api_key: Option<String>,
    model_name: String,
    dim: usize,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl RemoteEmbeddingProvider {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        url: impl Into<String>,
        api_key: Option<String>,
        model_name: impl Into<String>,
        dim: usize,
    ) -> Self {
        RemoteEmbeddingProvider {
            transport,
            url: url.into(),
            api_key,
            model_name: model_name.into(),
            dim,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn request(&self, texts: &[&str]) -> HttpRequest {
        let mut req = HttpRequest::new(Method::Post, &self.url).json(json!({
            "model": self.model_name,
            "input": texts,
            "dimensions": self.dim,
        }));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        req
    }

    fn decode(&self, body: &str, expected: usize) -> Result<Vec<EmbeddingVector>, String> {
        let parsed: EmbeddingsResponse =
            serde_json::from_str(body).map_err(|e| format!("unreadable response: {e}"))?;
        if parsed.data.len() != expected {
            return Err(format!(
                "expected {expected} embeddings, got {}",
                parsed.data.len()
            ));
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; expected];
        for (pos, datum) in parsed.data.into_iter().enumerate() {
            let idx = datum.index.unwrap_or(pos);
            if idx >= expected || slots[idx].is_some() {
                return Err(format!("bad embedding index {idx}"));
            }
            if datum.embedding.len() != self.dim {
                return Err(format!(
                    "embedding has dimension {}, configured {}",
                    datum.embedding.len(),
                    self.dim
                ));
            }
            slots[idx] = Some(EmbeddingVector::new(datum.embedding).map_err(|e| e.to_string())?);
        }
        Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
    }
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn id(&self) -> &str {
        "remote-api"
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let request = self.request(texts);
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.backoff(attempt - 1));
            }
            match self.transport.send(&request) {
                Ok(resp) if resp.is_success() => {
                    return self
                        .decode(&resp.body, texts.len())
                        .map_err(|message| EmbedError::Provider {
                            status: Some(resp.status),
                            attempts: attempt + 1,
                            message,
                        });
                }
                Ok(resp) => {
                    last_status = Some(resp.status);
                    last_message = resp.body.chars().take(200).collect();
                    let retryable = resp.status == 429 || resp.status >= 500;
                    if !retryable {
                        return Err(EmbedError::Provider {
                            status: last_status,
                            attempts: attempt + 1,
                            message: last_message,
                        });
                    }
                }
                Err(e) => {
                    last_status = None;
                    last_message = e.to_string();
                }
            }
            log::debug!("embedding request attempt {} failed: {last_message}", attempt + 1);
        }
        Err(EmbedError::Provider {
            status: last_status,
            attempts: self.retry.attempts,
            message: last_message,
        })
    }
}
