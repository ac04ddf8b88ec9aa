use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use kpdebate::runtime::{Backend, BackendError, GenerationRequest, Locale, PromptBundle, RemoteBackend, RemoteConfig, RoleId};

struct Seen {
    auth: Option<String>,
    body: serde_json::Value,
}

/// Answers one connection per canned (status, body), then stops.
fn stub(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut auth = None;
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    match k.to_ascii_lowercase().as_str() {
                        "authorization" => auth = Some(v.trim().to_string()),
                        "content-length" => len = v.trim().parse().unwrap(),
                        _ => {}
                    }
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            tx.send(Seen { auth, body: serde_json::from_slice(&buf).unwrap() }).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn config(url: String, key: &str) -> RemoteConfig {
    let mut c = RemoteConfig::new(url, key);
    c.backoff = Duration::from_millis(5);
    c.timeout = Duration::from_secs(5);
    c.params.insert("temperature".into(), serde_json::json!(0.2));
    c
}

fn generate(backend: &RemoteBackend) -> Result<String, BackendError> {
    let bundle = PromptBundle::new(RoleId::A1, "system text".into(), "task text".into(), Locale::default());
    backend.generate(&GenerationRequest { role: RoleId::A1, step: 1, attempt: 0, model_id: "m-1", bundle: &bundle })
}

#[test]
fn sends_chat_request_with_bearer_auth() {
    let (url, seen) = stub(vec![(200, ok_body("hello"))]);
    let backend = RemoteBackend::new(config(url, "sk-test"));
    assert_eq!(generate(&backend).unwrap(), "hello");
    let req = seen.recv().unwrap();
    assert_eq!(req.auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(req.body["model"], "m-1");
    assert_eq!(req.body["temperature"], 0.2);
    assert_eq!(req.body["messages"][0]["role"], "system");
    assert_eq!(req.body["messages"][1]["content"], "task text");
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, seen) = stub(vec![(503, "{}".into()), (429, "{}".into()), (200, ok_body("late"))]);
    let backend = RemoteBackend::new(config(url, ""));
    assert_eq!(generate(&backend).unwrap(), "late");
    assert_eq!(seen.iter().take(3).filter(|s| s.auth.is_none()).count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = stub(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let backend = RemoteBackend::new(config(url, "wrong"));
    let err = generate(&backend).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 401, attempts: 1, .. }));
    assert_eq!(seen.iter().count(), 1);
}

#[test]
fn gives_up_after_the_retry_budget() {
    let (url, _seen) = stub(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let backend = RemoteBackend::new(config(url, ""));
    let err = generate(&backend).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 500, attempts: 3, .. }));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = config(format!("http://127.0.0.1:{port}/x"), "");
    c.max_retries = 0;
    let err = generate(&RemoteBackend::new(c)).unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 1, .. }));
}
