#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use sample_select::http::HttpSettings;

/// A request as seen by [`MockServer`].
#[derive(Debug, Clone)]
pub struct Seen {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

type Handler = dyn Fn(&Seen) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering every request through `handler`.
/// Connections are closed after each response.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&Seen) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let seen = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let hits = hits.clone();
            let seen = seen.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let handler = handler.clone();
                    let hits = hits.clone();
                    let seen = seen.clone();
                    thread::spawn(move || serve(stream, &*handler, &hits, &seen));
                }
            });
        }
        Self { url, hits, seen }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, handler: &Handler, hits: &AtomicUsize, seen: &Mutex<Vec<Seen>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let request = Seen { path, authorization, body: serde_json::from_slice(&body).unwrap_or(Value::Null) };
    hits.fetch_add(1, Ordering::SeqCst);
    seen.lock().unwrap().push(request.clone());
    let (status, text) = handler(&request);
    let response = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let mut stream = stream;
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// Settings with short timeouts and no real backoff, for tests.
pub fn fast_settings(retries: u32) -> HttpSettings {
    HttpSettings {
        timeout: Duration::from_secs(5),
        retries,
        backoff: Duration::from_millis(1),
        bearer_token: None,
    }
}

/// An address nothing listens on.
pub fn dead_url() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    url
}

/// Runs the CLI binary and returns (exit code, stdout, stderr).
pub fn cli(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_sample-select"));
    cmd.args(args).env_remove("SAMPLE_SELECT_API_KEY");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A scripted-backend script with two documents of three candidates per
/// round; document "b" takes two rounds.
pub fn two_document_script() -> Value {
    serde_json::json!({
        "documents": {
            "a": [[
                {"text": "She won the race.", "ended": true},
                {"text": "She won the cup.", "ended": true},
                {"text": "He lost the race.", "ended": true}
            ]],
            "b": [
                [
                    {"text": "It rained all day. Then", "ended": false},
                    {"text": "It rained in town.", "ended": false},
                    {"text": "Snow fell all day.", "ended": false}
                ],
                [
                    {"text": "The roads were closed.", "ended": true},
                    {"text": "The roads were flooded.", "ended": false},
                    {"text": "They were closed.", "ended": false}
                ]
            ]
        }
    })
}

pub const TWO_DOCUMENTS: &str = concat!(
    r#"{"id": "a", "article": "The race was held.Results came in.", "reference": "She won the race."}"#,
    "\n",
    r#"{"id": "b", "article": "Weather report for the town."}"#,
    "\n"
);

/// Writes the script, dataset and a config using them into `dir`.
/// Returns (dataset path, config path).
pub fn scripted_fixture(dir: &std::path::Path, seed: u64) -> (String, String) {
    let script = dir.join("script.json");
    std::fs::write(&script, two_document_script().to_string()).unwrap();
    let dataset = dir.join("data.jsonl");
    std::fs::write(&dataset, TWO_DOCUMENTS).unwrap();
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "[generation]\nn = 3\nseed = {seed}\n\n[backend]\nkind = \"scripted\"\nscript = {:?}\n",
            script.to_str().unwrap()
        ),
    )
    .unwrap();
    (dataset.to_str().unwrap().to_string(), config.to_str().unwrap().to_string())
}
