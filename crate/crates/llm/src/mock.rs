//! Scripted chat-completion endpoint for offline tests and harness runs.
//!
//! Script format (JSON):
//!
//! ```json
//! {
//!   "tasks": [
//!     {"request": "<user request text>",
//!      "replies": [{"content": "not json"}, {"content": "{\"soft\": ...}"}]},
//!     {"request": "...", "replies": [{"status": 503, "body": "overloaded"}]}
//!   ],
//!   "fallback": {"status": 404, "body": "no script"}
//! }
//! ```
//!
//! A request is matched on its first user message. The reply for attempt `a`
//! is `replies[a - 1]`, the last reply repeating; the attempt is read off the
//! conversation length (system, user, then one assistant and one user message
//! per rejected attempt), so the server keeps no per-task state.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Content { content: String },
    Status { status: u16, body: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockTask {
    pub request: String,
    pub replies: Vec<MockReply>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockScript {
    pub tasks: Vec<MockTask>,
    #[serde(default)]
    pub fallback: Option<MockReply>,
}

impl MockScript {
    pub fn push(&mut self, request: impl Into<String>, replies: Vec<MockReply>) {
        self.tasks.push(MockTask {
            request: request.into(),
            replies,
        });
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| LlmError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// A request as the server saw it.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub path: String,
    pub authorization: Option<String>,
    pub body: serde_json::Value,
}

struct Shared {
    script: HashMap<String, Vec<MockReply>>,
    fallback: MockReply,
    received: Mutex<Vec<Received>>,
}

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(script: MockScript) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            script: script.tasks.into_iter().map(|t| (t.request, t.replies)).collect(),
            fallback: script.fallback.unwrap_or(MockReply::Status {
                status: 404,
                body: "no scripted reply for this request".into(),
            }),
            received: Mutex::new(Vec::new()),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (stop, shared) = (stop.clone(), shared.clone());
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = conn {
                        let shared = shared.clone();
                        std::thread::spawn(move || {
                            let _ = serve(stream, &shared);
                        });
                    }
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            shared,
            handle: Some(handle),
        })
    }

    /// Base URL to put in an endpoint config.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn received(&self) -> Vec<Received> {
        self.shared.received.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut length = 0usize;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = v.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    let body: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);

    let reply = pick(shared, &path, &body);
    shared.received.lock().unwrap().push(Received {
        path,
        authorization,
        body,
    });
    let (status, payload) = match reply {
        MockReply::Content { content } => (
            200,
            serde_json::json!({
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
            })
            .to_string(),
        ),
        MockReply::Status { status, body } => (status, body),
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    out.flush()
}

fn pick(shared: &Shared, path: &str, body: &serde_json::Value) -> MockReply {
    if !path.ends_with("/chat/completions") {
        return MockReply::Status {
            status: 404,
            body: format!("unknown path {path}"),
        };
    }
    let Some(messages) = body["messages"].as_array() else {
        return MockReply::Status {
            status: 400,
            body: "missing messages".into(),
        };
    };
    let request = messages
        .iter()
        .find(|m| m["role"] == "user")
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    let attempt = messages.len().saturating_sub(2) / 2 + 1;
    match shared.script.get(request) {
        Some(replies) if !replies.is_empty() => replies[(attempt - 1).min(replies.len() - 1)].clone(),
        _ => shared.fallback.clone(),
    }
}
