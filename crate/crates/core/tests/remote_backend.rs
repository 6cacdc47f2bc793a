//! Wire-contract tests for the remote generation backend, served by a canned
//! in-process HTTP/1.1 responder: request shape, bearer auth, retry-on-5xx,
//! fail-fast-on-4xx, and offline voting.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use autothink_core::coldstart::backend::{
    BackendError, GeneratorBackend, RemoteBackend, BACKEND_TOKEN_ENV,
};
use autothink_core::coldstart::QueryRecord;
use autothink_core::format::ReasoningMode;
use autothink_core::Domain;

struct RecordedRequest {
    request_line: String,
    headers: Vec<String>,
    body: String,
}

impl RecordedRequest {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find_map(|line| {
            let (key, value) = line.split_once(':')?;
            key.trim().eq_ignore_ascii_case(name).then(|| value.trim())
        })
    }
}

fn read_request(stream: &mut TcpStream) -> RecordedRequest {
    let mut raw = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end = loop {
        if let Some(at) = raw.windows(4).position(|w| w == b"\r\n\r\n") {
            break at + 4;
        }
        let n = stream.read(&mut chunk).expect("read request head");
        assert!(n > 0, "client closed mid-request");
        raw.extend_from_slice(&chunk[..n]);
    };
    let head = String::from_utf8(raw[..header_end].to_vec()).expect("request head is ASCII");
    let mut lines = head.lines();
    let request_line = lines.next().unwrap_or_default().to_string();
    let headers: Vec<String> =
        lines.map(str::to_string).filter(|line| !line.is_empty()).collect();
    let content_length: usize = headers
        .iter()
        .find_map(|line| {
            let (key, value) = line.split_once(':')?;
            if key.trim().eq_ignore_ascii_case("content-length") {
                value.trim().parse().ok()
            } else {
                None
            }
        })
        .unwrap_or(0);
    let mut body = raw[header_end..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).expect("read request body");
        assert!(n > 0, "client closed mid-body");
        body.extend_from_slice(&chunk[..n]);
    }
    RecordedRequest {
        request_line,
        headers,
        body: String::from_utf8(body).expect("request body is UTF-8"),
    }
}

/// Serves a fixed script of `(status, body)` responses, one connection each,
/// recording every request it answered.
fn serve(
    script: Vec<(u16, String)>,
) -> (String, Arc<Mutex<Vec<RecordedRequest>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback listener");
    let endpoint = format!("http://{}/generate", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&log);
    let handle = thread::spawn(move || {
        for (status, body) in script {
            let (mut stream, _) = listener.accept().expect("accept connection");
            let request = read_request(&mut stream);
            seen.lock().unwrap().push(request);
            let reason = match status {
                200 => "OK",
                404 => "Not Found",
                500 => "Internal Server Error",
                _ => "Status",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).expect("write response");
        }
    });
    (endpoint, log, handle)
}

fn sample_query() -> QueryRecord {
    QueryRecord {
        id: 42,
        domain: Domain::Math,
        difficulty: 0.7,
        query: "what is 6 x 7?".into(),
        reference: None,
        mode_label: None,
    }
}

fn ok_body(thinking: Option<&str>) -> String {
    let mut value = serde_json::json!({
        "judge_analysis": "arithmetic, no derivation needed",
        "answer": "42",
    });
    if let Some(t) = thinking {
        value["thinking"] = serde_json::Value::String(t.into());
    }
    value.to_string()
}

#[test]
fn respond_round_trips_the_wire_contract() {
    // Without a token, no authorization header goes out.
    let (endpoint, log, handle) = serve(vec![(200, ok_body(Some("6 times 7 is 42")))]);
    let backend = RemoteBackend::new(&endpoint);
    let response = backend.respond(&sample_query(), ReasoningMode::ThinkOn).expect("respond");
    assert_eq!(response.answer, "42");
    assert_eq!(response.thinking.as_deref(), Some("6 times 7 is 42"));
    assert_eq!(response.judge_analysis, "arithmetic, no derivation needed");
    handle.join().unwrap();
    {
        let log = log.lock().unwrap();
        assert_eq!(log.len(), 1);
        let request = &log[0];
        assert!(
            request.request_line.starts_with("POST /generate"),
            "unexpected request line {:?}",
            request.request_line
        );
        assert!(request.header("authorization").is_none(), "no token was configured");
        let posted: serde_json::Value = serde_json::from_str(&request.body).expect("JSON body");
        assert_eq!(posted["query"], "what is 6 x 7?");
        assert_eq!(posted["mode"], "on");
        assert_eq!(posted.as_object().unwrap().len(), 2, "body carries exactly query and mode");
    }

    // With the environment token set at construction, it goes out as a bearer.
    std::env::set_var(BACKEND_TOKEN_ENV, "sekrit");
    let (endpoint, log, handle) = serve(vec![(200, ok_body(None))]);
    let backend = RemoteBackend::new(&endpoint);
    std::env::remove_var(BACKEND_TOKEN_ENV);
    let response = backend.respond(&sample_query(), ReasoningMode::ThinkOff).expect("respond");
    assert!(response.thinking.is_none());
    handle.join().unwrap();
    let log = log.lock().unwrap();
    assert_eq!(log[0].header("authorization"), Some("Bearer sekrit"));
    let posted: serde_json::Value = serde_json::from_str(&log[0].body).expect("JSON body");
    assert_eq!(posted["mode"], "off");
}

#[test]
fn server_errors_retry_until_success() {
    let (endpoint, log, handle) =
        serve(vec![(500, "{}".to_string()), (200, ok_body(None))]);
    let backend = RemoteBackend::new(&endpoint).with_retry(3, Duration::from_millis(1));
    let response = backend
        .respond(&sample_query(), ReasoningMode::ThinkOff)
        .expect("second attempt should succeed");
    assert_eq!(response.answer, "42");
    handle.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 2, "exactly one retry after the 500");
}

#[test]
fn exhausted_retries_surface_the_server_error() {
    let script = vec![(500, "{}".to_string()), (500, "{}".to_string()), (500, "{}".to_string())];
    let (endpoint, log, handle) = serve(script);
    let backend = RemoteBackend::new(&endpoint).with_retry(2, Duration::from_millis(1));
    let error = backend
        .respond(&sample_query(), ReasoningMode::ThinkOn)
        .expect_err("persistent 500s must fail");
    assert!(matches!(&error, BackendError::Request(m) if m.contains("500")), "{error}");
    handle.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 3, "initial attempt plus two retries");
}

#[test]
fn client_errors_fail_without_retrying() {
    let (endpoint, log, handle) = serve(vec![(404, "no such route".to_string())]);
    let backend = RemoteBackend::new(&endpoint).with_retry(3, Duration::from_millis(1));
    let error = backend
        .respond(&sample_query(), ReasoningMode::ThinkOn)
        .expect_err("a 404 is not transient");
    assert!(matches!(&error, BackendError::Request(m) if m.contains("404")), "{error}");
    handle.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 1, "client errors must not be retried");
}

#[test]
fn unparseable_success_bodies_fail_without_retrying() {
    let (endpoint, log, handle) = serve(vec![(200, "this is not json".to_string())]);
    let backend = RemoteBackend::new(&endpoint).with_retry(3, Duration::from_millis(1));
    let error = backend
        .respond(&sample_query(), ReasoningMode::ThinkOn)
        .expect_err("garbage body must fail");
    assert!(matches!(error, BackendError::InvalidResponse(_)), "{error}");
    handle.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn votes_use_the_local_difficulty_rule_offline() {
    // Nothing listens on this port; voting must never open a connection.
    let backend = RemoteBackend::new("http://127.0.0.1:9/generate");
    let mut hard = sample_query();
    hard.difficulty = 0.7;
    let mut easy = sample_query();
    easy.difficulty = 0.2;
    for ballot in 0..5 {
        assert_eq!(backend.vote(&hard, ballot).unwrap(), ReasoningMode::ThinkOn);
        assert_eq!(backend.vote(&easy, ballot).unwrap(), ReasoningMode::ThinkOff);
    }
}
