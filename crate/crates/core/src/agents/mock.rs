//! A local chat-completions server with scripted answers, for tests and dry runs.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock, Mutex};
use std::thread::JoinHandle;

use regex::Regex;
use serde_json::{json, Value};

use crate::promptkit::sha256_hex;

/// What the mock saw in one request.
#[derive(Debug, Clone, PartialEq)]
pub struct MockRequest {
    pub body: Value,
    pub prompt: String,
    pub seed: Option<u64>,
    pub authorization: Option<String>,
}

/// Reply to send: a chat answer, or a raw HTTP status with body.
#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Answer(String),
    Status(u16, String),
}

type ScriptFn = dyn Fn(&MockRequest, usize) -> MockReply + Send + Sync;

/// Maps each request (and its arrival index) to a reply.
#[derive(Clone)]
pub struct MockScript(Arc<ScriptFn>);

static POOL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"There are (\d+) coins").unwrap());

impl MockScript {
    pub fn from_fn(f: impl Fn(&MockRequest, usize) -> MockReply + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn fixed(answer: impl Into<String>) -> Self {
        let answer = answer.into();
        Self::from_fn(move |_, _| MockReply::Answer(answer.clone()))
    }

    /// Replies in arrival order, repeating the last one when exhausted.
    pub fn sequence(replies: Vec<MockReply>) -> Self {
        assert!(!replies.is_empty(), "empty reply sequence");
        Self::from_fn(move |_, i| replies[i.min(replies.len() - 1)].clone())
    }

    /// Deterministic, varied answers keyed on (prompt, seed).
    ///
    /// Proposers offer half the pool, or one less, in short sentences; about one answer
    /// in fifty is unusable. Responders accept, gamblers pick A.
    pub fn ultimatum_demo() -> Self {
        Self::from_fn(|req, _| {
            let digest = sha256_hex(format!("{}|{:?}", req.prompt, req.seed).as_bytes());
            let h = u64::from_str_radix(&digest[..12], 16).unwrap_or(0);
            if req.prompt.contains("as the proposer.") {
                let pool: u32 = POOL.captures(&req.prompt).and_then(|c| c[1].parse().ok()).unwrap_or(10);
                if h.is_multiple_of(50) {
                    return MockReply::Answer("I would rather not make an offer in this game.".into());
                }
                let offer = if h.is_multiple_of(3) { (pool / 2).saturating_sub(1) } else { pool / 2 };
                let text = match h % 4 {
                    0 => format!("{offer}"),
                    1 => format!("I offer {offer} coins."),
                    2 => format!("My offer: {offer} out of {pool}."),
                    _ => format!("I'll give {offer}."),
                };
                MockReply::Answer(text)
            } else if req.prompt.contains("as the responder.") {
                MockReply::Answer("accept".into())
            } else {
                MockReply::Answer("A".into())
            }
        })
    }
}

fn parse_request(body: &str, authorization: Option<String>) -> Result<MockRequest, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let prompt =
        v.pointer("/messages/0/content").and_then(Value::as_str).ok_or("missing messages[0].content")?.to_string();
    if v.get("model").and_then(Value::as_str).is_none() {
        return Err("missing model".into());
    }
    let seed = v.get("seed").and_then(Value::as_u64);
    Ok(MockRequest { body: v, prompt, seed, authorization })
}

fn completion_json(answer: &str) -> String {
    json!({
        "id": "mock-completion",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": answer },
            "finish_reason": "stop"
        }]
    })
    .to_string()
}

/// Running mock server; shuts down on drop.
///
/// Every connection gets its own thread, so any number of concurrent clients is served at once.
pub struct MockServer {
    addr: String,
    hits: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<MockRequest>>>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

struct Shared {
    script: MockScript,
    hits: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<MockRequest>>>,
}

/// One parsed HTTP/1.1 request: headers (lowercased names) and body.
struct RawRequest {
    headers: Vec<(String, String)>,
    body: String,
}

impl RawRequest {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

fn read_request(reader: &mut impl BufRead) -> std::io::Result<Option<RawRequest>> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 {
            return Ok(None);
        }
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
    }
    let len: usize = headers.iter().find(|(k, _)| k == "content-length").and_then(|(_, v)| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    Ok(Some(RawRequest { headers, body: String::from_utf8_lossy(&body).into_owned() }))
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn serve_connection(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    while let Some(request) = read_request(&mut reader)? {
        let index = shared.hits.fetch_add(1, Ordering::SeqCst);
        let auth = request.header("authorization").map(str::to_string);
        let (status, payload) = match parse_request(&request.body, auth) {
            Ok(req) => {
                let reply = (shared.script.0)(&req, index);
                shared.log.lock().expect("mock log lock").push(req);
                match reply {
                    MockReply::Answer(a) => (200, completion_json(&a)),
                    MockReply::Status(s, b) => (s, b),
                }
            }
            Err(e) => (400, json!({ "error": e }).to_string()),
        };
        let close = request.header("connection").is_some_and(|v| v.eq_ignore_ascii_case("close"));
        write!(
            writer,
            "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n{}\r\n{payload}",
            reason(status),
            payload.len(),
            if close { "Connection: close\r\n" } else { "" },
        )?;
        writer.flush()?;
        if close {
            break;
        }
    }
    Ok(())
}

impl MockServer {
    /// Bind to an ephemeral localhost port.
    pub fn start(script: MockScript) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", script)
    }

    pub fn bind(addr: &str, script: MockScript) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?.to_string();
        let hits = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::new(Shared { script, hits: hits.clone(), log: log.clone() });
        let flag = stop.clone();
        let acceptor = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let shared = shared.clone();
                std::thread::spawn(move || {
                    let _ = serve_connection(stream, &shared);
                });
            }
        });
        Ok(Self { addr, hits, log, stop, acceptor: Some(acceptor) })
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Chat-completions URL served by this mock.
    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.log.lock().expect("mock log lock").clone()
    }

    /// Block the calling thread until the process is killed.
    pub fn serve_forever(mut self) {
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            // wake the blocked accept so the loop sees the flag
            let _ = TcpStream::connect(&self.addr);
            let _ = a.join();
        }
    }
}
