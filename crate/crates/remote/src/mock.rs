//! A small deterministic HTTP server for tests.
//!
//! It speaks just enough HTTP/1.1 for a JSON POST. Each connection carries
//! one request and is closed after the reply. Every request is recorded.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

use crate::protocol::TopLogprob;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockReply {
    pub status: u16,
    pub body: String,
}

impl MockReply {
    pub fn json(body: Value) -> Self {
        MockReply {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        MockReply {
            status,
            body: json!({"error": {"message": "mock error"}}).to_string(),
        }
    }

    /// A one-token completion whose first position carries `top`.
    pub fn logprobs(top: &[(&str, f64)]) -> Self {
        let top: Vec<TopLogprob> = top
            .iter()
            .map(|(t, l)| TopLogprob {
                token: t.to_string(),
                logprob: *l,
            })
            .collect();
        let first = top.first().cloned().unwrap_or(TopLogprob {
            token: String::new(),
            logprob: 0.0,
        });
        Self::json(json!({
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": first.token},
                "logprobs": {"content": [{
                    "token": first.token,
                    "logprob": first.logprob,
                    "top_logprobs": top,
                }]},
                "finish_reason": "length",
            }],
        }))
    }

    /// A completion with text but no `logprobs` field.
    pub fn text(content: &str) -> Self {
        Self::json(json!({
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop",
            }],
        }))
    }

    pub fn embedding(v: &[f64]) -> Self {
        Self::json(json!({
            "object": "list",
            "data": [{"object": "embedding", "index": 0, "embedding": v}],
        }))
    }
}

type Handler = dyn Fn(&RecordedRequest) -> MockReply + Send + Sync;

struct Shared {
    handler: Box<Handler>,
    queue: Mutex<VecDeque<MockReply>>,
    log: Mutex<Vec<RecordedRequest>>,
    stop: AtomicBool,
}

/// Replies come from a queue of scripted replies first, then from the
/// handler.
pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&RecordedRequest) -> MockReply + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            handler: Box::new(handler),
            queue: Mutex::new(VecDeque::new()),
            log: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let worker = shared.clone();
        let thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let worker = worker.clone();
                std::thread::spawn(move || {
                    let _ = serve(stream, &worker);
                });
            }
        });
        Ok(MockServer {
            addr,
            shared,
            thread: Some(thread),
        })
    }

    /// Replies to every request with `reply`.
    pub fn fixed(reply: MockReply) -> std::io::Result<Self> {
        Self::start(move |_| reply.clone())
    }

    /// Base URL including the `/v1` prefix.
    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn enqueue(&self, reply: MockReply) {
        self.shared.queue.lock().unwrap().push_back(reply);
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.log.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    if method.is_empty() {
        return Ok(());
    }

    let mut length = 0usize;
    let mut authorization = None;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header == "\r\n" || header == "\n" {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.parse().unwrap_or(0),
                "authorization" => authorization = Some(value.to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;

    let request = RecordedRequest {
        method,
        path,
        authorization,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    shared.log.lock().unwrap().push(request.clone());
    let scripted = shared.queue.lock().unwrap().pop_front();
    let reply = scripted.unwrap_or_else(|| (shared.handler)(&request));

    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    stream.flush()
}
