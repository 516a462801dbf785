mod common;

use std::time::Duration;

use cohesion_core::cpp::extract_functions;
use cohesion_core::scorer::{
    score, BackendError, MaskedCode, ProbabilityMode, RemoteBackend, RemoteConfig, ScoringConfig,
    TokenProbabilityBackend,
};
use common::{FakeMode, FakeModelServer};

fn quick() -> RemoteConfig {
    RemoteConfig { retries: 3, timeout: Duration::from_secs(5), backoff: Duration::from_millis(1) }
}

fn masked(n: usize) -> MaskedCode {
    MaskedCode { text: format!("int {}() {{ return 1; }}", "[MASK]".repeat(n)), mask_count: n, gold_tokens: None }
}

#[test]
fn negotiates_info_and_fills_masks() {
    let server = FakeModelServer::start(FakeMode::Constant);
    let backend = RemoteBackend::connect(&server.url, quick()).unwrap();
    assert_eq!(backend.mask_token(), "[MASK]");
    assert_eq!(backend.max_context(), Some(4096));
    assert_eq!(backend.id(), "fake-model");
    let r = backend.fill_mask(&masked(3)).unwrap();
    assert_eq!(r.probabilities, [0.5, 0.5, 0.5]);
    assert_eq!(r.backend_id, "fake-model");
    let sent = server.requests.lock().unwrap()[0].clone();
    assert_eq!(sent["mask_count"], 3);
    assert!(sent.get("gold_tokens").is_none());
}

#[test]
fn scoring_through_the_server_uses_its_mask_token() {
    let server = FakeModelServer::start(FakeMode::Constant);
    let backend = RemoteBackend::connect(&server.url, quick()).unwrap();
    let f = extract_functions("int getValue(int k) {\n  return k * 2;\n}\n", "a.cpp").unwrap().remove(0);
    let cfg = ScoringConfig { probability_mode: ProbabilityMode::GoldTokens, ..Default::default() };
    let s = score(&f, &backend, &cfg).unwrap();
    assert_eq!(s.per_n_confidence, [0.5; 8]);
    assert_eq!((s.npc, s.otc), (0.5, 1));
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 8);
    for (i, req) in requests.iter().enumerate() {
        let code = req["code"].as_str().unwrap();
        assert_eq!(code.matches("[MASK]").count(), i + 1);
        assert_eq!(req["gold_tokens"].as_array().unwrap().len(), i + 1);
    }
}

#[test]
fn length_mismatch_and_garbage_are_errors() {
    let short = FakeModelServer::start(FakeMode::ShortResponse);
    let backend = RemoteBackend::connect(&short.url, quick()).unwrap();
    assert_eq!(backend.fill_mask(&masked(2)), Err(BackendError::LengthMismatch { expected: 2, got: 1 }));

    let garbage = FakeModelServer::start(FakeMode::Garbage);
    let backend = RemoteBackend::connect(&garbage.url, quick()).unwrap();
    assert!(matches!(backend.fill_mask(&masked(1)), Err(BackendError::Malformed(_))));
}

#[test]
fn server_errors_are_retried() {
    let server = FakeModelServer::start(FakeMode::FlakyThenOk);
    let backend = RemoteBackend::connect(&server.url, quick()).unwrap();
    assert!(backend.fill_mask(&masked(1)).is_ok());
    assert_eq!(server.requests.lock().unwrap().len(), 3);

    let server = FakeModelServer::start(FakeMode::FlakyThenOk);
    let no_retry = RemoteBackend::connect(&server.url, RemoteConfig { retries: 0, ..quick() }).unwrap();
    assert!(matches!(no_retry.fill_mask(&masked(1)), Err(BackendError::Status { code: 500, .. })));
}

#[test]
fn oversized_input_is_truncated_until_accepted() {
    let server = FakeModelServer::start(FakeMode::SmallWindow);
    let backend = RemoteBackend::connect(&server.url, quick()).unwrap();
    let body: String = (0..40).map(|i| format!("    acc += data[{i}];\n")).collect();
    let src = format!("int sum(const int *data) {{\n    int acc = 0;\n{body}    return acc;\n}}\n");
    let f = extract_functions(&src, "a.cpp").unwrap().remove(0);
    let s = score(&f, &backend, &ScoringConfig::default()).unwrap();
    assert_eq!(s.npc, 0.5);
    let requests = server.requests.lock().unwrap();
    let accepted: Vec<&str> = requests.iter().filter_map(|r| r["code"].as_str()).filter(|c| c.len() <= 200).collect();
    assert_eq!(accepted.len(), 8);
    assert!(accepted.iter().all(|c| c.starts_with("int [MASK]") && c.ends_with("\n}")));
}

#[test]
fn unreachable_server_is_a_connection_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = RemoteBackend::connect(&format!("http://127.0.0.1:{port}"), RemoteConfig { retries: 1, ..quick() });
    assert!(matches!(err, Err(BackendError::Connection(_))));
}
