//! Cue vectorization: text in, unit-norm [`EmbeddingVector`] out.
//!
//! An [`Embedder`] wraps a backend (remote HTTP endpoint or the deterministic
//! hash embedder used for offline tests) with normalization and a
//! content-addressed cache. Every vector is L2-normalized and rounded through
//! `f32` before it is handed out, so a freshly computed vector and the same
//! vector read back from the on-disk cache are bit-identical.

mod cache;
mod hash;
mod remote;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{cue_key, CueSet, EmbeddingVector};
use crate::numeric::{self, NumericError};
use crate::remote::{RetryPolicy, TransportError};

pub use cache::{EmbeddingCache, EMBED_CACHE_INDEX_SUFFIX};
pub use hash::{HashEmbedder, HASH_EMBEDDER_MODEL_ID};
pub use remote::{HttpEmbeddingBackend, EMBED_API_KEY_ENV};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("invalid embedder spec: {0}")]
    InvalidSpec(String),
    #[error("embedding request failed: {0}")]
    Transport(#[from] TransportError),
    #[error("backend returned {got}-dimensional vector, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backend returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("unusable vector for {text:?}: {source}")]
    Vector { text: String, source: NumericError },
    #[error("embedding cache {path}: {message}")]
    Cache { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderKind {
    Remote,
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub model_id: String,
    pub dim: usize,
}

impl EmbedderSpec {
    pub fn remote(model_id: &str, dim: usize) -> Result<Self, EmbedError> {
        let spec = EmbedderSpec {
            kind: EmbedderKind::Remote,
            model_id: model_id.to_string(),
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn deterministic_test(dim: usize) -> Result<Self, EmbedError> {
        let spec = EmbedderSpec {
            kind: EmbedderKind::DeterministicTest,
            model_id: HASH_EMBEDDER_MODEL_ID.to_string(),
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Cache namespace: vectors of one model at one dimension.
    pub fn cache_namespace(&self) -> String {
        format!("{}@{}", self.model_id, self.dim)
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidSpec("dim must be positive".into()));
        }
        if self.kind == EmbedderKind::Remote && self.model_id.trim().is_empty() {
            return Err(EmbedError::InvalidSpec("remote embedder needs a model id".into()));
        }
        Ok(())
    }
}

/// Source of raw (unnormalized) vectors.
pub trait EmbeddingBackend: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub vector: EmbeddingVector,
    pub cached: bool,
}

const BATCH_SIZE: usize = 64;

pub struct Embedder {
    spec: EmbedderSpec,
    backend: Box<dyn EmbeddingBackend>,
    cache: Arc<EmbeddingCache>,
    retry: RetryPolicy,
}

impl Embedder {
    pub fn new(
        spec: EmbedderSpec,
        backend: Box<dyn EmbeddingBackend>,
        cache: Arc<EmbeddingCache>,
        retry: RetryPolicy,
    ) -> Result<Self, EmbedError> {
        spec.validate()?;
        Ok(Embedder {
            spec,
            backend,
            cache,
            retry,
        })
    }

    /// The offline hash embedder with an in-memory cache.
    pub fn deterministic(dim: usize) -> Result<Self, EmbedError> {
        let spec = EmbedderSpec::deterministic_test(dim)?;
        Self::new(
            spec,
            Box::new(HashEmbedder::new(dim)),
            Arc::new(EmbeddingCache::in_memory()),
            RetryPolicy::none(),
        )
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn embed(&self, text: &str) -> Result<Embedded, EmbedError> {
        Ok(self.embed_many(&[text])?.pop().expect("one result per text"))
    }

    /// Embed several texts, sending only cache misses to the backend.
    pub fn embed_many<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Embedded>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| cue_key(t.as_ref())).collect();
        if keys.iter().any(String::is_empty) {
            return Err(EmbedError::EmptyText);
        }
        let model = &self.spec.cache_namespace();
        let mut missing: Vec<String> = keys
            .iter()
            .filter(|k| self.cache.get(model, k).is_none())
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();

        let mut fresh = std::collections::HashSet::new();
        for chunk in missing.chunks(BATCH_SIZE) {
            let raw = self
                .retry
                .run(|| self.backend.embed_batch(chunk), |e: &TransportError| e.retryable)?;
            if raw.len() != chunk.len() {
                return Err(EmbedError::CountMismatch {
                    expected: chunk.len(),
                    got: raw.len(),
                });
            }
            for (key, values) in chunk.iter().zip(raw) {
                let stored = self.quantize(key, values)?;
                self.cache.insert(model, key, &stored)?;
                fresh.insert(key.clone());
            }
        }

        keys.iter()
            .map(|k| {
                let stored = self.cache.get(model, k).expect("inserted above");
                let vector =
                    EmbeddingVector::from_raw(stored.iter().map(|&v| v as f64).collect()).map_err(|source| {
                        EmbedError::Vector {
                            text: k.clone(),
                            source,
                        }
                    })?;
                Ok(Embedded {
                    vector,
                    cached: !fresh.contains(k),
                })
            })
            .collect()
    }

    fn quantize(&self, key: &str, values: Vec<f64>) -> Result<Vec<f32>, EmbedError> {
        if values.len() != self.spec.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.spec.dim,
                got: values.len(),
            });
        }
        let vector = |source| EmbedError::Vector {
            text: key.to_string(),
            source,
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(vector(NumericError::NonFinite));
        }
        let norm = numeric::l2_norm(&values);
        if norm == 0.0 {
            return Err(vector(NumericError::ZeroVector));
        }
        Ok(values.iter().map(|v| (v / norm) as f32).collect())
    }

    /// Embed every cue of a set. Keys are normalized cue texts, so a cue that
    /// appears in two dimensions occupies one entry.
    pub fn embed_cue_set(&self, cues: &CueSet) -> Result<BTreeMap<String, EmbeddingVector>, EmbedError> {
        let texts: Vec<&str> = cues.iter().map(|(_, c)| c.text()).collect();
        let embedded = self.embed_many(&texts)?;
        Ok(texts
            .iter()
            .zip(embedded)
            .map(|(t, e)| (cue_key(t), e.vector))
            .collect())
    }
}
