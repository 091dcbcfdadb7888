//! Text embeddings behind a provider contract, plus the vector operations
//! used by retrieval and topology analysis.
//!
//! Provider outputs are L2-normalized unconditionally, so cosine scores are
//! scale-invariant regardless of what the backing model returns.

mod cache;
mod mock;
mod remote;

pub use cache::EmbeddingCache;
pub use mock::MockEmbedding;
pub use remote::RemoteEmbedding;

use crate::util;

pub const DEFAULT_DIMS: usize = 64;

/// How close a provider output must be to unit norm after normalization.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("cannot take the centroid of an empty list")]
    EmptyList,
    #[error("provider error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Provider {
        status: Option<u16>,
        message: String,
    },
    #[error("embedding cache: {0}")]
    Cache(String),
}

/// A fixed-dimension real vector. Construction rejects non-finite values;
/// unit norm is a property of *provider outputs*, not of every vector
/// (centroids are deliberately not re-normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::EmptyList);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Componentwise difference; errors on dimension mismatch.
    pub fn sub(&self, other: &Self) -> Result<Self, EmbedError> {
        check_dims(self, other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), EmbedError> {
    if a.dims() != b.dims() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

/// Cosine similarity, clamped into [-1, 1]. Exactly symmetric.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    let norm_a = a.norm();
    let norm_b = b.norm();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Componentwise arithmetic mean. Not re-normalized.
pub fn centroid(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector, EmbedError> {
    let first = vectors.first().ok_or(EmbedError::EmptyList)?;
    let dims = first.dims();
    let mut sums = vec![0.0f64; dims];
    for v in vectors {
        if v.dims() != dims {
            return Err(EmbedError::DimensionMismatch {
                left: dims,
                right: v.dims(),
            });
        }
        for (s, x) in sums.iter_mut().zip(v.values()) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    EmbeddingVector::new(sums.into_iter().map(|s| s / n).collect())
}

/// Euclidean distance between two vectors of equal dimension.
pub fn euclidean(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    check_dims(a, b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// An embedding backend. `embed_raw` may return unnormalized values; the
/// [`Embedder`] wrapper normalizes and caches.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    fn dims(&self) -> usize;
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Provider plus cache plus normalization: the embedding entry point the
/// rest of the pipeline uses.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: Option<EmbeddingCache>,
    max_in_flight: usize,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>) -> Self {
        Self {
            provider,
            cache: None,
            max_in_flight: 4,
        }
    }

    pub fn with_cache(mut self, cache: EmbeddingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn dims(&self) -> usize {
        self.provider.dims()
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn model(&self) -> &str {
        self.provider.model()
    }

    /// Embed one text: cache lookup, provider call, unit normalization.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let key = self.cache_key(text);
        if let Some(cache) = &self.cache {
            if let Some(values) = cache.get(&key) {
                return EmbeddingVector::new(values);
            }
        }
        let vector = self.compute(text)?;
        if let Some(cache) = &self.cache {
            cache.insert(&key, vector.values())?;
        }
        Ok(vector)
    }

    /// Embed a batch with bounded parallelism. Cache insertions happen in
    /// input order after the parallel phase, so the persisted cache file is
    /// reproducible run to run.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        let mut missing: Vec<usize> = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            if text.is_empty() {
                return Err(EmbedError::EmptyText);
            }
            if let Some(cache) = &self.cache {
                if let Some(values) = cache.get(&self.cache_key(text)) {
                    out[i] = Some(EmbeddingVector::new(values)?);
                    continue;
                }
            }
            missing.push(i);
        }
        let computed =
            util::bounded_map(&missing, self.max_in_flight, |&i| self.compute(&texts[i]));
        for (&i, result) in missing.iter().zip(computed) {
            let vector = result?;
            if let Some(cache) = &self.cache {
                cache.insert(&self.cache_key(&texts[i]), vector.values())?;
            }
            out[i] = Some(vector);
        }
        Ok(out.into_iter().map(|v| v.expect("slot filled")).collect())
    }

    fn cache_key(&self, text: &str) -> cache::CacheKey {
        cache::CacheKey {
            provider: self.provider.name().to_string(),
            model: self.provider.model().to_string(),
            text_hash: util::sha256_hex(text),
            dims: self.provider.dims(),
        }
    }

    fn compute(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let raw = self.provider.embed_raw(text)?;
        if raw.len() != self.provider.dims() {
            return Err(EmbedError::DimensionMismatch {
                left: self.provider.dims(),
                right: raw.len(),
            });
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::ZeroNorm);
        }
        EmbeddingVector::new(raw.into_iter().map(|v| v / norm).collect())
    }
}
