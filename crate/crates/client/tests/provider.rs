use std::collections::HashSet;
use std::fs;
use std::time::Duration;

use fewshot_client::{
    embed_texts, mock_vector, Backoff, ClientError, EmbeddingCache, EmbeddingClient, MockConfig, MockFaults,
    MockProvider, ProviderConfig, MOCK_DIM,
};

fn fast_config(url: String) -> ProviderConfig {
    let mut c = ProviderConfig::new(url, "mock-embed");
    c.backoff = Backoff {
        base: Duration::from_millis(2),
        factor: 2.0,
        cap: Duration::from_millis(20),
    };
    c
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("document number {i}")).collect()
}

fn mock(faults: MockFaults) -> MockProvider {
    MockProvider::start(MockConfig {
        seed: 3,
        dim: MOCK_DIM,
        faults,
    })
    .unwrap()
}

#[test]
fn vectors_come_back_in_input_order() {
    let server = mock(MockFaults::default());
    let input = texts(10);
    let got = embed_texts(&input, &fast_config(server.url()), None).unwrap();
    assert_eq!(got.len(), 10);
    for (t, v) in input.iter().zip(&got) {
        assert_eq!(v, &mock_vector(3, "mock-embed", t, MOCK_DIM));
    }
}

#[test]
fn warm_cache_sends_nothing() {
    let server = mock(MockFaults::default());
    let dir = tempfile::tempdir().unwrap();
    let input = texts(20);
    let cfg = fast_config(server.url());
    let first = embed_texts(&input, &cfg, Some(dir.path())).unwrap();
    let after_first = server.request_count();
    assert_eq!(after_first, 1);
    let second = embed_texts(&input, &cfg, Some(dir.path())).unwrap();
    assert_eq!(server.request_count(), after_first);
    let bits = |vs: &[Vec<f64>]| vs.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&first), bits(&second));
}

#[test]
fn partial_cache_only_fetches_misses() {
    let server = mock(MockFaults::default());
    let dir = tempfile::tempdir().unwrap();
    let cfg = fast_config(server.url());
    embed_texts(&texts(5), &cfg, Some(dir.path())).unwrap();
    embed_texts(&texts(8), &cfg, Some(dir.path())).unwrap();
    let requests = server.requests();
    assert_eq!(requests.len(), 2);
    let body: serde_json::Value = serde_json::from_str(&requests[1].body).unwrap();
    assert_eq!(body["input"].as_array().unwrap().len(), 3);
}

#[test]
fn cold_cache_batches_by_ceiling() {
    let server = mock(MockFaults::default());
    let dir = tempfile::tempdir().unwrap();
    let got = embed_texts(&texts(130), &fast_config(server.url()), Some(dir.path())).unwrap();
    assert_eq!(got.len(), 130);
    assert_eq!(server.request_count(), 3);
    let mut sizes: Vec<usize> = server
        .requests()
        .iter()
        .map(|r| {
            serde_json::from_str::<serde_json::Value>(&r.body).unwrap()["input"]
                .as_array()
                .unwrap()
                .len()
        })
        .collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 64, 64]);
}

#[test]
fn shuffled_responses_are_reordered() {
    let server = mock(MockFaults {
        shuffle: true,
        ..Default::default()
    });
    let input = texts(150);
    let got = embed_texts(&input, &fast_config(server.url()), None).unwrap();
    for (t, v) in input.iter().zip(&got) {
        assert_eq!(v, &mock_vector(3, "mock-embed", t, MOCK_DIM));
    }
}

#[test]
fn rate_limited_requests_are_retried() {
    let server = mock(MockFaults {
        rate_limit_every: Some(3),
        ..Default::default()
    });
    let input = texts(300);
    let mut cfg = fast_config(server.url());
    cfg.max_concurrent = 1;
    let got = embed_texts(&input, &cfg, None).unwrap();
    assert_eq!(got.len(), 300);
    // 5 batches plus one 429 for every two successes
    assert_eq!(server.request_count(), 7);
    assert_eq!(got[299], mock_vector(3, "mock-embed", &input[299], MOCK_DIM));
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let server = mock(MockFaults {
        server_error_every: Some(1),
        ..Default::default()
    });
    let mut cfg = fast_config(server.url());
    cfg.max_retries = 2;
    let err = embed_texts(&texts(3), &cfg, None).unwrap_err();
    assert!(matches!(err, ClientError::Transport { attempts: 3, .. }), "{err}");
    assert_eq!(server.request_count(), 3);
}

#[test]
fn unreachable_provider_is_a_transport_error() {
    let server = mock(MockFaults::default());
    let url = server.url();
    drop(server);
    let mut cfg = fast_config(url);
    cfg.max_retries = 1;
    cfg.timeout = Duration::from_secs(2);
    assert!(matches!(
        embed_texts(&texts(1), &cfg, None),
        Err(ClientError::Transport { attempts: 2, .. })
    ));
}

#[test]
fn auth_failure_is_not_retried() {
    let server = mock(MockFaults {
        required_key: Some("sekrit".into()),
        ..Default::default()
    });
    let mut cfg = fast_config(server.url());
    cfg.api_key = Some("wrong".into());
    let err = embed_texts(&texts(4), &cfg, None).unwrap_err();
    assert!(matches!(err, ClientError::Auth { status: 401 }));
    assert_eq!(server.request_count(), 1);

    cfg.api_key = Some("sekrit".into());
    assert_eq!(embed_texts(&texts(4), &cfg, None).unwrap().len(), 4);
}

#[test]
fn truncated_and_ragged_responses_are_provider_faults() {
    for faults in [
        MockFaults {
            truncate: true,
            ..Default::default()
        },
        MockFaults {
            ragged: true,
            ..Default::default()
        },
    ] {
        let server = mock(faults);
        let err = embed_texts(&texts(4), &fast_config(server.url()), None).unwrap_err();
        assert!(matches!(err, ClientError::ProviderFault(_)), "{err}");
    }
}

#[test]
fn corrupt_cache_entry_is_refetched() {
    let server = mock(MockFaults::default());
    let dir = tempfile::tempdir().unwrap();
    let cfg = fast_config(server.url());
    let input = texts(3);
    let first = embed_texts(&input, &cfg, Some(dir.path())).unwrap();

    let cache = EmbeddingCache::new(dir.path());
    let path = cache.path_for("mock-embed", &input[1]);
    fs::write(&path, b"FSEM garbage").unwrap();
    assert!(cache.get("mock-embed", &input[1]).is_none());

    let second = embed_texts(&input, &cfg, Some(dir.path())).unwrap();
    assert_eq!(first, second);
    assert_eq!(server.request_count(), 2);
    let body: serde_json::Value = serde_json::from_str(&server.requests()[1].body).unwrap();
    assert_eq!(body["input"], serde_json::json!([input[1]]));
    assert_eq!(cache.get("mock-embed", &input[1]).unwrap(), first[1]);
}

#[test]
fn cache_layout_uses_hash_prefix_directories() {
    let server = mock(MockFaults::default());
    let dir = tempfile::tempdir().unwrap();
    embed_texts(&["alpha"], &fast_config(server.url()), Some(dir.path())).unwrap();
    let key = fewshot_client::cache_key("mock-embed", "alpha");
    let file = dir.path().join(&key[..2]).join(format!("{key}.emb"));
    assert_eq!(fs::metadata(file).unwrap().len(), 16 + 8 * MOCK_DIM as u64);
}

#[test]
fn distinct_texts_get_distinct_vectors() {
    let server = mock(MockFaults::default());
    let input = texts(1000);
    let got = embed_texts(&input, &fast_config(server.url()), None).unwrap();
    let unique: HashSet<Vec<u64>> = got.iter().map(|v| v.iter().map(|x| x.to_bits()).collect()).collect();
    assert_eq!(unique.len(), 1000);
    assert_eq!(server.request_count(), 16);
}

#[test]
fn requests_carry_only_model_and_texts() {
    let server = mock(MockFaults::default());
    let client = EmbeddingClient::new(fast_config(server.url()), None).unwrap();
    client.embed(&["one", "two"]).unwrap();
    assert_eq!(client.requests_sent(), 1);
    let recorded = &server.requests()[0];
    assert_eq!(recorded.method, "POST");
    assert_eq!(recorded.url, "/v1/embeddings");
    let body: serde_json::Value = serde_json::from_str(&recorded.body).unwrap();
    assert_eq!(
        body,
        serde_json::json!({"model": "mock-embed", "input": ["one", "two"]})
    );
}

#[test]
fn empty_input_is_rejected() {
    let cfg = ProviderConfig::new("http://127.0.0.1:9", "m");
    let none: [&str; 0] = [];
    assert!(matches!(embed_texts(&none, &cfg, None), Err(ClientError::EmptyInput)));
}

#[test]
fn results_are_stable_across_servers() {
    let a = mock(MockFaults::default());
    let b = mock(MockFaults {
        shuffle: true,
        ..Default::default()
    });
    let input = texts(70);
    let mut cfg = fast_config(a.url());
    cfg.batch_size = 16;
    let va = embed_texts(&input, &cfg, None).unwrap();
    cfg.base_url = b.url();
    cfg.max_concurrent = 1;
    let vb = embed_texts(&input, &cfg, None).unwrap();
    assert_eq!(va, vb);
}
