//! Adapter-contract tests against a minimal in-process HTTP stub.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use et2rag::consensus::{similarity, EmbedderConfig, SimilarityKind};
use et2rag::error::Error;
use et2rag::generation::{
    continue_generation, generate_candidate, GeneratorConfig, HttpChatConfig,
};
use et2rag::organization::OrganizedSubset;
use et2rag::retrieval::{external_retrieve, ExternalRetrieverConfig};
use et2rag::types::{Document, Query};

/// Serves a fixed body (HTTP 200 unless `status` says otherwise) for
/// every request; returns the endpoint URL.
fn spawn_stub(status: u16, body: String) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let body = body.clone();
            thread::spawn(move || {
                let mut buffer = [0u8; 65536];
                let mut read_total = 0;
                // read until end of headers plus declared body length
                loop {
                    let n = match stream.read(&mut buffer[read_total..]) {
                        Ok(0) | Err(_) => break,
                        Ok(n) => n,
                    };
                    read_total += n;
                    let text = String::from_utf8_lossy(&buffer[..read_total]);
                    if let Some(header_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length:")
                                    .map(|v| v.trim().parse::<usize>().unwrap_or(0))
                            })
                            .unwrap_or(0);
                        if read_total >= header_end + 4 + content_length {
                            break;
                        }
                    }
                }
                let reason = if status == 200 { "OK" } else { "ERR" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            });
        }
    });
    format!("http://{addr}")
}

fn query() -> Query {
    Query::new("q1", "what is the capital").unwrap()
}

fn subset() -> OrganizedSubset {
    OrganizedSubset {
        index: 1,
        documents: vec![Document {
            id: "d1".into(),
            text: "paris facts".into(),
            score: 1.0,
            rank: 1,
        }],
    }
}

fn retriever_cfg(url: String) -> ExternalRetrieverConfig {
    ExternalRetrieverConfig {
        endpoint_url: url,
        request_timeout_secs: 5.0,
    }
}

#[test]
fn external_retrieve_adapts_two_documents() {
    let url = spawn_stub(
        200,
        serde_json::json!({"documents": [
            {"id": "a", "text": "first", "score": 2.0},
            {"id": "b", "text": "second", "score": 1.0}
        ]})
        .to_string(),
    );
    let result = external_retrieve(&retriever_cfg(url), &query(), 5).unwrap();
    assert_eq!(result.documents.len(), 2);
    assert_eq!(result.documents[0].rank, 1);
    assert_eq!(result.documents[1].rank, 2);
}

#[test]
fn external_retrieve_resorts_unsorted_scores() {
    let url = spawn_stub(
        200,
        serde_json::json!({"documents": [
            {"id": "low", "text": "x", "score": 0.1},
            {"id": "high", "text": "y", "score": 9.0}
        ]})
        .to_string(),
    );
    let result = external_retrieve(&retriever_cfg(url), &query(), 5).unwrap();
    assert_eq!(result.documents[0].id, "high");
    assert_eq!(result.documents[0].rank, 1);
}

#[test]
fn external_retrieve_rejects_malformed_payload() {
    let url = spawn_stub(200, r#"{"unexpected": true}"#.into());
    let err = external_retrieve(&retriever_cfg(url), &query(), 5).unwrap_err();
    match err {
        Error::MalformedResponse { payload, .. } => assert!(payload.contains("unexpected")),
        other => panic!("expected malformed-response error, got {other}"),
    }
}

#[test]
fn external_retrieve_surfaces_http_status() {
    let url = spawn_stub(500, "boom".into());
    let err = external_retrieve(&retriever_cfg(url), &query(), 5).unwrap_err();
    assert!(matches!(err, Error::Http { .. }));
}

fn chat_cfg(url: String) -> GeneratorConfig {
    GeneratorConfig::HttpChat(HttpChatConfig {
        endpoint_url: url,
        model_name: "stub-model".into(),
        api_key_env_var: None,
        temperature: 0.0,
        request_timeout_secs: 5.0,
        max_retries: 0,
        full_generation_max_tokens: 64,
    })
}

#[test]
fn http_chat_candidate_reads_usage_and_finish_reason() {
    let url = spawn_stub(
        200,
        serde_json::json!({
            "choices": [{"message": {"content": "paris is"}, "finish_reason": "length"}],
            "usage": {"prompt_tokens": 20, "completion_tokens": 2}
        })
        .to_string(),
    );
    let candidate =
        generate_candidate(&chat_cfg(url), &query(), &subset(), "qa-default", 2).unwrap();
    assert_eq!(candidate.text, "paris is");
    assert_eq!(candidate.token_count, 2);
    assert!(candidate.truncated);
    assert_eq!(candidate.gen_token_cost, 2);
}

#[test]
fn http_chat_natural_stop_is_not_truncated() {
    let url = spawn_stub(
        200,
        serde_json::json!({
            "choices": [{"message": {"content": "paris"}, "finish_reason": "stop"}],
            "usage": {"completion_tokens": 1}
        })
        .to_string(),
    );
    let candidate =
        generate_candidate(&chat_cfg(url), &query(), &subset(), "qa-default", 10).unwrap();
    assert!(!candidate.truncated);
}

#[test]
fn http_chat_continuation_appends_stub_suffix() {
    let url = spawn_stub(
        200,
        serde_json::json!({
            "choices": [{"message": {"content": " the capital"}, "finish_reason": "stop"}],
            "usage": {"completion_tokens": 2}
        })
        .to_string(),
    );
    let cfg = chat_cfg(url);
    let prefix = et2rag::generation::Candidate {
        subset_index: 1,
        text: "paris is".into(),
        token_count: 2,
        truncated: true,
        gen_token_cost: 2,
    };
    let continuation =
        continue_generation(&cfg, &query(), &subset(), "qa-default", &prefix).unwrap();
    assert_eq!(continuation.text, "paris is the capital");
    assert_eq!(continuation.extra_tokens, 2);
}

#[test]
fn http_chat_errors_identify_the_subset() {
    let url = spawn_stub(500, "unavailable".into());
    let err =
        generate_candidate(&chat_cfg(url), &query(), &subset(), "qa-default", 3).unwrap_err();
    match err {
        Error::Backend { subset_index, .. } => assert_eq!(subset_index, 1),
        other => panic!("expected backend error, got {other}"),
    }
}

#[test]
fn embedding_endpoint_drives_cosine_similarity() {
    let url = spawn_stub(
        200,
        serde_json::json!({"data": [{"embedding": [1.0, 0.0, 1.0]}]}).to_string(),
    );
    let kind = SimilarityKind::EmbeddingCosine {
        embedder: EmbedderConfig::Http {
            endpoint_url: url,
            model_name: "stub-embed".into(),
            api_key_env_var: None,
        },
    };
    // stub returns the same vector for both texts: cosine 1
    let value = similarity(&kind, "alpha", "beta").unwrap();
    assert!((value - 1.0).abs() < 1e-12);
}
