//! Chat-completion client with bounded retries and a token-bucket rate limiter.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Agent, AgentError, CompletionRequest, TrialContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt` (1-based; the first attempt has no delay).
    pub fn backoff(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            Duration::ZERO
        } else {
            self.initial_backoff * 2u32.saturating_pow(attempt - 2)
        }
    }
}

/// Blocking token bucket refilled at `per_minute / 60` tokens per second.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(requests_per_minute: f64, burst: u32) -> Self {
        let capacity = burst.max(1) as f64;
        Self { capacity, per_second: requests_per_minute / 60.0, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Take one token without waiting; returns how long to wait when none is available.
    pub fn try_acquire(&self) -> Result<(), Duration> {
        let mut state = self.state.lock().expect("token bucket lock poisoned");
        let now = Instant::now();
        let (tokens, last) = *state;
        let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_second).min(self.capacity);
        if tokens >= 1.0 {
            *state = (tokens - 1.0, now);
            Ok(())
        } else {
            *state = (tokens, now);
            Err(Duration::from_secs_f64((1.0 - tokens) / self.per_second))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub requests_per_minute: Option<f64>,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key_env: None,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            requests_per_minute: None,
        }
    }
}

pub struct RemoteAgent {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
    limiter: Option<TokenBucket>,
}

/// JSON body sent for one request.
pub fn request_body(request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "messages": [{ "role": "user", "content": request.prompt }],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Answer text at `choices[0].message.content`.
pub fn extract_content(body: &Value) -> Result<String, AgentError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| AgentError::MalformedResponse("missing choices[0].message.content".into()))
}

enum Attempt {
    Done(String),
    Retry(AgentError),
    Fail(AgentError),
}

impl RemoteAgent {
    pub fn new(config: RemoteConfig) -> Result<Self, AgentError> {
        let token = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| AgentError::InvalidRequest(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| AgentError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        let limiter = config.requests_per_minute.map(|rpm| TokenBucket::per_minute(rpm, 1));
        Ok(Self { config, client, token, limiter })
    }

    fn attempt(&self, body: &Value) -> Attempt {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(AgentError::Timeout),
            Err(e) => return Attempt::Retry(AgentError::Transport { status: None, body: e.to_string() }),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(AgentError::Timeout),
            Err(e) => {
                return Attempt::Retry(AgentError::Transport { status: Some(status.as_u16()), body: e.to_string() })
            }
        };
        if status.is_success() {
            return match serde_json::from_str::<Value>(&text) {
                Ok(v) => match extract_content(&v) {
                    Ok(c) => Attempt::Done(c),
                    Err(e) => Attempt::Fail(e),
                },
                Err(e) => Attempt::Fail(AgentError::MalformedResponse(e.to_string())),
            };
        }
        let err = AgentError::Transport { status: Some(status.as_u16()), body: text };
        if status.as_u16() == 429 || status.is_server_error() {
            Attempt::Retry(err)
        } else {
            Attempt::Fail(err)
        }
    }
}

impl Agent for RemoteAgent {
    fn complete(&self, request: &CompletionRequest, trial: &TrialContext) -> Result<String, AgentError> {
        let body = request_body(request);
        let mut last = AgentError::Transport { status: None, body: "no attempt made".into() };
        for attempt in 1..=self.config.retry.max_attempts.max(1) {
            let wait = self.config.retry.backoff(attempt);
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    debug!("trial {}/{} answered on attempt {attempt}", trial.config_index, trial.repetition);
                    return Ok(text);
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    warn!("trial {}/{} attempt {attempt} failed: {e}", trial.config_index, trial.repetition);
                    last = e;
                }
            }
        }
        Err(last)
    }

    fn describe(&self) -> String {
        format!("remote({})", self.config.endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::ZERO);
        assert_eq!(p.backoff(2), Duration::from_secs(1));
        assert_eq!(p.backoff(3), Duration::from_secs(2));
    }

    #[test]
    fn body_shape() {
        let req = CompletionRequest {
            model: "m".into(),
            prompt: "hi".into(),
            temperature: 1.0,
            max_tokens: 64,
            seed: Some(7),
        };
        let b = request_body(&req);
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["messages"][0]["content"], "hi");
        assert_eq!(b["seed"], 7);
        let no_seed = request_body(&CompletionRequest { seed: None, ..req });
        assert!(no_seed.get("seed").is_none());
    }

    #[test]
    fn content_extraction() {
        let ok = json!({"choices": [{"message": {"role": "assistant", "content": "7"}}]});
        assert_eq!(extract_content(&ok).unwrap(), "7");
        assert!(extract_content(&json!({"choices": []})).is_err());
    }

    #[test]
    fn bucket_limits_burst() {
        let b = TokenBucket::per_minute(60.0, 2);
        assert!(b.try_acquire().is_ok());
        assert!(b.try_acquire().is_ok());
        let wait = b.try_acquire().unwrap_err();
        assert!(wait > Duration::from_millis(900) && wait <= Duration::from_secs(1));
    }
}
