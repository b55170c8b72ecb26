//! Local stand-in for an embeddings provider.
//!
//! Serves the same wire format as a real provider on an ephemeral
//! loopback port. The vector for a text is a unit vector derived from
//! SHA-256 of `(seed, model, text)`, so it is stable across runs and
//! machines. Every request's URL and body are recorded.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use tiny_http::{Header, Response, Server};

/// Dimension of mock embeddings.
pub const MOCK_DIM: usize = 64;

/// Deterministic unit vector for `text` under `model` and `seed`.
pub fn mock_vector(seed: u64, model: &str, text: &str, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    let root = h.finalize();

    let mut v = Vec::with_capacity(dim);
    let mut block = 0u64;
    while v.len() < dim {
        let digest = Sha256::new()
            .chain_update(root)
            .chain_update(block.to_le_bytes())
            .finalize();
        for chunk in digest.chunks_exact(8) {
            if v.len() == dim {
                break;
            }
            let bits = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            // 53 random mantissa bits mapped onto [-1, 1)
            v.push((bits >> 11) as f64 / (1u64 << 52) as f64 - 1.0);
        }
        block += 1;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Fault injection switches. Request numbering starts at 1 and counts every
/// request the server sees.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockFaults {
    /// Answer 429 to every nth request.
    pub rate_limit_every: Option<usize>,
    /// Answer 503 to every nth request.
    pub server_error_every: Option<usize>,
    /// Drop the last item from every response.
    pub truncate: bool,
    /// Shuffle the `data` array (indices stay correct).
    pub shuffle: bool,
    /// Require `Authorization: Bearer <key>`; anything else gets 401.
    pub required_key: Option<String>,
    /// Return vectors of alternating dimension within a batch.
    pub ragged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub seed: u64,
    pub dim: usize,
    pub faults: MockFaults,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: MOCK_DIM,
            faults: MockFaults::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub method: String,
    pub url: String,
    pub body: String,
}

#[derive(Deserialize)]
struct Incoming {
    model: String,
    input: Vec<String>,
}

struct Shared {
    config: MockConfig,
    count: AtomicUsize,
    log: Mutex<Vec<RecordedRequest>>,
    stop: AtomicBool,
}

/// Running mock server; stops when dropped.
pub struct MockProvider {
    addr: SocketAddr,
    server: Arc<Server>,
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl MockProvider {
    pub fn start(config: MockConfig) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", config)
    }

    pub fn bind(addr: &str, config: MockConfig) -> std::io::Result<Self> {
        let server = Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            config,
            count: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let worker = {
            let server = Arc::clone(&server);
            let shared = Arc::clone(&shared);
            thread::spawn(move || serve(&server, &shared))
        };
        Ok(Self {
            addr,
            server,
            shared,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// Base URL to hand to a client.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.shared.count.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Blocks the calling thread until the server is shut down from
    /// elsewhere (used by the command-line server).
    pub fn wait(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockProvider {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn serve(server: &Server, shared: &Shared) {
    for mut request in server.incoming_requests() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let n = shared.count.fetch_add(1, Ordering::SeqCst) + 1;
        let mut body = String::new();
        let readable = request.as_reader().read_to_string(&mut body).is_ok();
        let auth = request
            .headers()
            .iter()
            .find(|h| h.field.equiv("Authorization"))
            .map(|h| h.value.as_str().to_string());
        let url = request.url().to_string();
        shared
            .log
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(RecordedRequest {
                method: request.method().as_str().to_string(),
                url: url.clone(),
                body: body.clone(),
            });

        let (status, payload) = if !readable {
            (400, json!({"error": "unreadable body"}))
        } else {
            respond(&shared.config, n, &url, auth.as_deref(), &body)
        };
        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = Response::from_string(payload.to_string())
            .with_status_code(status)
            .with_header(header);
        let _ = request.respond(response);
    }
}

fn every(n: usize, period: Option<usize>) -> bool {
    matches!(period, Some(p) if p > 0 && n.is_multiple_of(p))
}

fn respond(config: &MockConfig, n: usize, url: &str, auth: Option<&str>, body: &str) -> (u16, serde_json::Value) {
    let faults = &config.faults;
    if url != "/v1/embeddings" {
        return (404, json!({"error": "not found"}));
    }
    if let Some(key) = &faults.required_key {
        if auth != Some(format!("Bearer {key}").as_str()) {
            return (401, json!({"error": "invalid api key"}));
        }
    }
    if every(n, faults.rate_limit_every) {
        return (429, json!({"error": "rate limited"}));
    }
    if every(n, faults.server_error_every) {
        return (503, json!({"error": "unavailable"}));
    }
    let incoming: Incoming = match serde_json::from_str(body) {
        Ok(i) => i,
        Err(e) => return (400, json!({"error": e.to_string()})),
    };
    let mut data: Vec<serde_json::Value> = incoming
        .input
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let dim = if faults.ragged && i % 2 == 1 {
                config.dim + 1
            } else {
                config.dim
            };
            json!({
                "object": "embedding",
                "index": i,
                "embedding": mock_vector(config.seed, &incoming.model, text, dim),
            })
        })
        .collect();
    if faults.shuffle {
        let mut rng = rand::rngs::StdRng::seed_from_u64(config.seed ^ n as u64);
        data.shuffle(&mut rng);
    }
    if faults.truncate {
        data.pop();
    }
    (200, json!({"object": "list", "model": incoming.model, "data": data}))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_are_unit_and_pure() {
        let a = mock_vector(7, "m", "hello", MOCK_DIM);
        assert_eq!(a.len(), MOCK_DIM);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(a, mock_vector(7, "m", "hello", MOCK_DIM));
        assert_ne!(a, mock_vector(8, "m", "hello", MOCK_DIM));
        assert_ne!(a, mock_vector(7, "n", "hello", MOCK_DIM));
        assert_eq!(mock_vector(7, "m", "hello", 3).len(), 3);
    }

    #[test]
    fn fault_schedule() {
        assert!(every(3, Some(3)) && every(6, Some(3)));
        assert!(!every(4, Some(3)) && !every(3, None) && !every(3, Some(0)));
    }
}
