//! HTTP plumbing shared by the remote embedding and chat backends:
//! exponential backoff with full jitter, retrying transport errors and
//! 429/5xx statuses.

use rand::Rng;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay_ms: 500,
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn with_retries(retries: u32) -> Self {
        Self {
            retries,
            ..Self::default()
        }
    }

    /// Full jitter: uniform in [0, base * factor^attempt).
    fn delay(&self, attempt: u32) -> Duration {
        let cap = self.base_delay_ms as f64 * self.factor.powi(attempt as i32);
        let ms = rand::thread_rng().gen_range(0.0..cap.max(1.0));
        Duration::from_millis(ms as u64)
    }
}

/// Outcome of a single attempt.
pub enum Attempt<T> {
    Ok(T),
    /// Retryable: transport error or 429/5xx.
    Transient {
        status: Option<u16>,
        message: String,
    },
    /// Non-retryable: 4xx (other than 429), malformed response, etc.
    Fatal {
        status: Option<u16>,
        message: String,
    },
}

/// Drive `attempt` up to `1 + retries` times.
pub fn with_retry<T>(
    policy: &RetryPolicy,
    mut attempt: impl FnMut() -> Attempt<T>,
) -> Result<T, (Option<u16>, String)> {
    let mut tries = 0;
    loop {
        match attempt() {
            Attempt::Ok(value) => return Ok(value),
            Attempt::Fatal { status, message } => return Err((status, message)),
            Attempt::Transient { status, message } => {
                if tries >= policy.retries {
                    return Err((status, format!("{message} (after {} attempts)", tries + 1)));
                }
                std::thread::sleep(policy.delay(tries));
                tries += 1;
            }
        }
    }
}

/// Classify a blocking reqwest outcome into an attempt result carrying the
/// response body text on success.
pub fn classify_response(
    result: Result<reqwest::blocking::Response, reqwest::Error>,
) -> Attempt<String> {
    match result {
        Err(e) => Attempt::Transient {
            status: None,
            message: format!("transport error: {e}"),
        },
        Ok(response) => {
            let status = response.status();
            let code = status.as_u16();
            let body = response.text().unwrap_or_default();
            if status.is_success() {
                Attempt::Ok(body)
            } else if code == 429 || status.is_server_error() {
                Attempt::Transient {
                    status: Some(code),
                    message: truncate(&body),
                }
            } else {
                Attempt::Fatal {
                    status: Some(code),
                    message: truncate(&body),
                }
            }
        }
    }
}

fn truncate(body: &str) -> String {
    const LIMIT: usize = 400;
    if body.len() <= LIMIT {
        body.to_string()
    } else {
        let mut end = LIMIT;
        while !body.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &body[..end])
    }
}
