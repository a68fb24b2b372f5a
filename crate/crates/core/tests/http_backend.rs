//! The HTTP client against a minimal in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use latent_ui::error::LlmError;
use latent_ui::llm::{
    CompletionBackend, CompletionRequest, HttpBackend, HttpConfig, RetryPolicy, RetryingBackend,
};

struct Seen {
    head: String,
    body: serde_json::Value,
}

/// Serves one canned `(status, body)` per connection, in order.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, payload) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            let _ = tx.send(Seen {
                head,
                body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            });
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn backend(url: &str, key: Option<&str>) -> HttpBackend {
    let config = HttpConfig {
        base_url: url.to_string(),
        model: "stub-model".into(),
        timeout_secs: 5,
    };
    HttpBackend::with_api_key(config, key.map(String::from)).unwrap()
}

fn choices(texts: &[&str]) -> String {
    let items: Vec<_> = texts
        .iter()
        .map(|t| serde_json::json!({ "text": t }))
        .collect();
    serde_json::json!({ "choices": items }).to_string()
}

#[test]
fn sends_sampling_parameters_and_returns_choices() {
    let (url, seen) = serve(vec![(200, choices(&["a", "b", "a"]))]);
    let out = backend(&url, Some("secret"))
        .complete(&CompletionRequest::sampled("hello", 3, 0.5))
        .unwrap();
    assert_eq!(out, ["a", "b", "a"]);
    let req = seen.recv_timeout(Duration::from_secs(5)).unwrap();
    assert!(req.head.starts_with("POST /v1/completions "));
    assert!(req
        .head
        .to_ascii_lowercase()
        .contains("authorization: bearer secret"));
    assert_eq!(req.body["prompt"], "hello");
    assert_eq!(req.body["n"], 3);
    assert_eq!(req.body["temperature"], 0.5);
    assert_eq!(req.body["model"], "stub-model");
}

#[test]
fn wrong_choice_count_is_a_schema_error() {
    let (url, _seen) = serve(vec![(200, choices(&["only one"]))]);
    let err = backend(&url, None)
        .complete(&CompletionRequest::sampled("x", 2, 0.5))
        .unwrap_err();
    assert!(matches!(err, LlmError::Schema(_)), "{err:?}");
}

fn quick_retries() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        base_delay: Duration::from_millis(1),
        multiplier: 2.0,
    }
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = serve(vec![(503, "busy".into()), (200, choices(&["ok"]))]);
    let retrying = RetryingBackend::new(backend(&url, None), quick_retries()).unwrap();
    assert_eq!(
        retrying.complete(&CompletionRequest::greedy("p")).unwrap(),
        ["ok"]
    );
    assert_eq!(seen.try_iter().count(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, _seen) = serve(vec![(400, "bad".into())]);
    let retrying = RetryingBackend::new(backend(&url, None), quick_retries()).unwrap();
    let err = retrying
        .complete(&CompletionRequest::greedy("p"))
        .unwrap_err();
    assert!(
        matches!(err, LlmError::Status { status: 400, .. }),
        "{err:?}"
    );
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = backend(&format!("http://127.0.0.1:{port}"), None)
        .complete(&CompletionRequest::greedy("p"))
        .unwrap_err();
    assert!(matches!(err, LlmError::Transport(_)));
}
