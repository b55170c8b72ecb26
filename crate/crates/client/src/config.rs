use std::time::Duration;

use rand::Rng;

use crate::ClientError;

/// Environment variable holding the provider API key.
pub const API_KEY_ENV: &str = "FEWSHOT_API_KEY";

/// Exponential backoff with full jitter: the wait before retry `n` is drawn
/// uniformly from `[0, min(cap, base * factor^n)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(500),
            factor: 2.0,
            cap: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    /// Upper end of the jitter window for zero-based retry `attempt`.
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let scaled = self.base.as_secs_f64() * self.factor.powi(attempt.min(1024) as i32);
        Duration::from_secs_f64(scaled.min(self.cap.as_secs_f64()))
    }

    pub fn delay<R: Rng + ?Sized>(&self, attempt: u32, rng: &mut R) -> Duration {
        let ceiling = self.ceiling(attempt).as_secs_f64();
        if ceiling <= 0.0 {
            return Duration::ZERO;
        }
        Duration::from_secs_f64(rng.random_range(0.0..=ceiling))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub batch_size: usize,
    pub max_retries: u32,
    pub timeout: Duration,
    pub max_concurrent: usize,
    pub backoff: Backoff,
}

impl ProviderConfig {
    /// Defaults with no API key.
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            batch_size: 64,
            max_retries: 5,
            timeout: Duration::from_secs(30),
            max_concurrent: 4,
            backoff: Backoff::default(),
        }
    }

    /// Defaults with the key taken from [`API_KEY_ENV`], if set and non-empty.
    pub fn from_env(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self {
            api_key,
            ..Self::new(base_url, model)
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/embeddings", self.base_url.trim_end_matches('/'))
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: &str| Err(ClientError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.max_concurrent == 0 {
            return bad("max concurrent requests must be >= 1");
        }
        if self.model.is_empty() {
            return bad("model name is empty");
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad("base url must start with http:// or https://");
        }
        if !(self.backoff.factor >= 1.0 && self.backoff.factor.is_finite()) {
            return bad("backoff factor must be a finite number >= 1");
        }
        Ok(())
    }
}
