//! Blocking JSON-over-HTTP client shared by the remote providers.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Environment variable holding an optional bearer token for provider requests.
pub const TOKEN_ENV: &str = "ABEXRAT_PROVIDER_TOKEN";

/// Attempts per request and the first backoff delay (doubled after each failure).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }

    /// Runs `op` until it succeeds or the attempt budget is spent.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let attempts = self.attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.delay_before(attempt));
            }
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    base_url: String,
    agent: ureq::Agent,
    token: Option<String>,
    pub retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R> {
        let mut req = self.agent.post(url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Error::Provider(format!("POST {url}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Provider(format!("POST {url}: HTTP {status}")));
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| Error::Provider(format!("POST {url}: malformed response: {e}")))
    }

    /// POST `body` to `<base><path>` and decode the JSON reply, retrying per policy.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base_url, path);
        self.retry.run(|| self.post_once(&url, body))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(1), Duration::from_millis(500));
        assert_eq!(p.delay_before(2), Duration::from_secs(1));
        assert_eq!(p.delay_before(3), Duration::from_secs(2));
    }

    #[test]
    fn retries_until_success() {
        let policy = RetryPolicy {
            attempts: 3,
            base_delay: Duration::ZERO,
        };
        let mut calls = 0;
        let v = policy
            .run(|| {
                calls += 1;
                if calls < 3 {
                    Err(Error::Provider("flaky".into()))
                } else {
                    Ok(7)
                }
            })
            .unwrap();
        assert_eq!((v, calls), (7, 3));

        let mut calls = 0;
        let err = policy.run::<()>(|| {
            calls += 1;
            Err(Error::Provider("down".into()))
        });
        assert!(matches!(err, Err(Error::Provider(_))));
        assert_eq!(calls, 3);
    }
}
