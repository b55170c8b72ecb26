//! Blocking HTTP client for embeddings endpoints.
//!
//! Wire format: `POST {base_url}/v1/embeddings` with
//! `{"model": ..., "input": [...]}`, answered by
//! `{"data": [{"index": i, "embedding": [...]}, ...]}`. Only the texts are
//! ever put on the wire.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use crate::cache::EmbeddingCache;
use crate::config::ProviderConfig;
use crate::ClientError;

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

/// Puts the response items back in request order and checks that every
/// input got exactly one vector of a common dimension.
fn reorder(items: Vec<EmbeddingItem>, expected: usize) -> Result<Vec<Vec<f64>>, ClientError> {
    if items.len() != expected {
        return Err(ClientError::ProviderFault(format!(
            "{} embeddings returned for {expected} inputs",
            items.len()
        )));
    }
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected];
    for item in items {
        let slot = slots
            .get_mut(item.index)
            .ok_or_else(|| ClientError::ProviderFault(format!("index {} out of range", item.index)))?;
        if slot.replace(item.embedding).is_some() {
            return Err(ClientError::ProviderFault(format!(
                "index {} returned twice",
                item.index
            )));
        }
    }
    let vectors: Vec<Vec<f64>> = slots.into_iter().map(|s| s.expect("all slots filled")).collect();
    check_dimensions(&vectors)?;
    Ok(vectors)
}

fn check_dimensions(vectors: &[Vec<f64>]) -> Result<(), ClientError> {
    let Some(dim) = vectors.first().map(Vec::len) else {
        return Ok(());
    };
    if dim == 0 {
        return Err(ClientError::ProviderFault("empty embedding".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(ClientError::ProviderFault(format!(
            "inconsistent embedding dimension: {dim} and {}",
            v.len()
        )));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ClientError::ProviderFault("non-finite embedding value".into()));
    }
    Ok(())
}

type BatchSlot = Option<Result<Vec<Vec<f64>>, ClientError>>;

enum Attempt {
    Done(Vec<Vec<f64>>),
    Retry(String),
}

pub struct EmbeddingClient {
    config: ProviderConfig,
    http: Client,
    cache: Option<EmbeddingCache>,
    requests: AtomicUsize,
}

impl EmbeddingClient {
    pub fn new(config: ProviderConfig, cache_dir: Option<&Path>) -> Result<Self, ClientError> {
        config.validate()?;
        let http = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::InvalidConfig(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            config,
            http,
            cache: cache_dir.map(EmbeddingCache::new),
            requests: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// One vector per text, in input order. Cached texts are not sent;
    /// the rest go out in batches of at most `batch_size`, with up to
    /// `max_concurrent` requests in flight.
    pub fn embed<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::EmptyInput);
        }
        let model = self.config.model.as_str();
        let mut out: Vec<Option<Vec<f64>>> = texts
            .iter()
            .map(|t| self.cache.as_ref().and_then(|c| c.get(model, t.as_ref())))
            .collect();
        let misses: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        let batches: Vec<&[usize]> = misses.chunks(self.config.batch_size).collect();

        let fetched = self.fetch_batches(texts, &batches)?;
        for (batch, vectors) in batches.iter().zip(fetched) {
            for (&i, v) in batch.iter().zip(vectors) {
                if let Some(cache) = &self.cache {
                    cache.put(model, texts[i].as_ref(), &v)?;
                }
                out[i] = Some(v);
            }
        }
        let vectors: Vec<Vec<f64>> = out.into_iter().map(|v| v.expect("every text resolved")).collect();
        check_dimensions(&vectors)?;
        Ok(vectors)
    }

    fn fetch_batches<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
        batches: &[&[usize]],
    ) -> Result<Vec<Vec<Vec<f64>>>, ClientError> {
        let results: Mutex<Vec<BatchSlot>> = Mutex::new((0..batches.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.config.max_concurrent.min(batches.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    let Some(batch) = batches.get(b) else { break };
                    let input: Vec<&str> = batch.iter().map(|&i| texts[i].as_ref()).collect();
                    let result = self.fetch(&input);
                    let failed = result.is_err();
                    results.lock().unwrap_or_else(|p| p.into_inner())[b] = Some(result);
                    if failed {
                        // stop handing out work; batches in flight finish
                        next.store(batches.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let results = results.into_inner().unwrap_or_else(|p| p.into_inner());
        // report the earliest failing batch, independent of completion order
        let mut vectors = Vec::with_capacity(batches.len());
        for r in results {
            match r {
                Some(Ok(v)) => vectors.push(v),
                Some(Err(e)) => return Err(e),
                // skipped after a failure, which a later slot reports
                None => {}
            }
        }
        assert_eq!(vectors.len(), batches.len(), "a skipped batch without a recorded error");
        Ok(vectors)
    }

    /// One batch, retried on 429, 5xx and transport failures.
    fn fetch(&self, input: &[&str]) -> Result<Vec<Vec<f64>>, ClientError> {
        let mut rng = rand::rng();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(self.config.backoff.delay(attempt - 1, &mut rng));
            }
            match self.attempt(input)? {
                Attempt::Done(v) => return Ok(v),
                Attempt::Retry(reason) => last = reason,
            }
        }
        Err(ClientError::Transport {
            attempts: self.config.max_retries + 1,
            message: last,
        })
    }

    fn attempt(&self, input: &[&str]) -> Result<Attempt, ClientError> {
        let body = EmbeddingRequest {
            model: &self.config.model,
            input,
        };
        let mut request = self.http.post(self.config.endpoint()).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = response.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(ClientError::Auth {
                status: status.as_u16(),
            });
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Ok(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(ClientError::Rejected {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        let parsed: EmbeddingResponse = match response.json() {
            Ok(p) => p,
            Err(e) if e.is_decode() => return Err(ClientError::ProviderFault(format!("malformed response: {e}"))),
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        reorder(parsed.data, input.len()).map(Attempt::Done)
    }
}

/// Embeds `texts` with a one-off client.
pub fn embed_texts<S: AsRef<str> + Sync>(
    texts: &[S],
    config: &ProviderConfig,
    cache_dir: Option<&Path>,
) -> Result<Vec<Vec<f64>>, ClientError> {
    EmbeddingClient::new(config.clone(), cache_dir)?.embed(texts)
}
