//! Embedding provider client: batching, bounded concurrency, retries with
//! jittered exponential backoff, and a content-addressed disk cache, plus a
//! deterministic local mock provider.
//!
//! Requests carry the model name and the texts, nothing else; labels stay
//! with the caller.

use thiserror::Error;

pub mod cache;
pub mod client;
pub mod config;
pub mod mock;

pub use cache::{cache_key, CacheError, EmbeddingCache};
pub use client::{embed_texts, EmbeddingClient};
pub use config::{Backoff, ProviderConfig, API_KEY_ENV};
pub use mock::{mock_vector, MockConfig, MockFaults, MockProvider, RecordedRequest, MOCK_DIM};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("no texts to embed")]
    EmptyInput,
    #[error("provider rejected credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("provider rejected request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider fault: {0}")]
    ProviderFault(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}
