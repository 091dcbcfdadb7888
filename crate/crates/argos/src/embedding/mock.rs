//! Deterministic hash-based embedding provider.
//!
//! The vector for a text is a pure function of the text alone: lowercase,
//! split on non-alphanumeric runs, and for each token `t` and dimension `i`
//! add `(fnv1a64("t:i") / (2^64 - 1)) * 2 - 1` to component `i`. The
//! wrapper normalizes the summed vector to unit length. No model download,
//! no network, byte-identical across processes.

use super::{EmbedError, EmbeddingProvider};
use crate::util::fnv1a64;

#[derive(Debug, Clone)]
pub struct MockEmbedding {
    model: String,
    dims: usize,
}

impl MockEmbedding {
    pub fn new(model: &str, dims: usize) -> Self {
        Self {
            model: model.to_string(),
            dims,
        }
    }

    fn tokens(text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect()
    }
}

impl EmbeddingProvider for MockEmbedding {
    fn name(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let tokens = Self::tokens(text);
        if tokens.is_empty() {
            // Whitespace/punctuation-only input carries no content.
            return Err(EmbedError::EmptyText);
        }
        let mut values = vec![0.0f64; self.dims];
        for token in &tokens {
            for (i, slot) in values.iter_mut().enumerate() {
                let h = fnv1a64(format!("{token}:{i}").as_bytes());
                *slot += (h as f64 / u64::MAX as f64) * 2.0 - 1.0;
            }
        }
        Ok(values)
    }
}
