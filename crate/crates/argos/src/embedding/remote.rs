//! Remote embedding provider speaking the common embeddings request shape
//! `{"model": ..., "input": [text]}` and reading the first embedding of the
//! response. The bearer token comes from the environment, never from
//! configuration files.

use serde::Deserialize;

use super::{EmbedError, EmbeddingProvider};
use crate::net::{classify_response, with_retry, Attempt, RetryPolicy};

pub struct RemoteEmbedding {
    endpoint: String,
    model: String,
    dims: usize,
    token: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingEntry>,
}

#[derive(Deserialize)]
struct EmbeddingEntry {
    embedding: Vec<f64>,
}

impl RemoteEmbedding {
    pub fn new(
        endpoint: &str,
        model: &str,
        dims: usize,
        token: Option<String>,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            dims,
            token,
            retry,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl EmbeddingProvider for RemoteEmbedding {
    fn name(&self) -> &str {
        "remote"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let body = serde_json::json!({ "model": self.model, "input": [text] });
        let outcome = with_retry(&self.retry, || {
            let mut request = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.token {
                request = request.bearer_auth(token);
            }
            match classify_response(request.send()) {
                Attempt::Ok(text) => Attempt::Ok(text),
                Attempt::Transient { status, message } => Attempt::Transient { status, message },
                Attempt::Fatal { status, message } => Attempt::Fatal { status, message },
            }
        });
        let body = outcome.map_err(|(status, message)| EmbedError::Provider { status, message })?;
        let parsed: EmbeddingsResponse =
            serde_json::from_str(&body).map_err(|e| EmbedError::Provider {
                status: None,
                message: format!("unparseable response: {e}"),
            })?;
        let first = parsed.data.into_iter().next().ok_or(EmbedError::Provider {
            status: None,
            message: "response contained no embeddings".into(),
        })?;
        Ok(first.embedding)
    }
}
