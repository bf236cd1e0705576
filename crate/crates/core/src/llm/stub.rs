//! Local chat-completions stub for offline runs and contract tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

/// What the stub sends back for one request.
#[derive(Debug, Clone, PartialEq)]
pub enum StubReply {
    /// 200 with the text as `choices[0].message.content`.
    Content(String),
    /// Bare status code with a short body.
    Status(u16),
}

type Responder = Box<dyn FnMut(&Value) -> StubReply + Send>;

pub struct StubServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<Value>>>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Serve on an ephemeral loopback port; `responder` sees each parsed
    /// request body.
    pub fn start(
        responder: impl FnMut(&Value) -> StubReply + Send + 'static,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (s, h, r) = (stop.clone(), hits.clone(), requests.clone());
        let mut responder: Responder = Box::new(responder);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                if let Err(e) = serve(stream, &mut responder, &h, &r) {
                    log::debug!("stub connection error: {e}");
                }
            }
        });
        Ok(StubServer {
            addr,
            stop,
            hits,
            requests,
            handle: Some(handle),
        })
    }

    /// Always answer with the same content.
    pub fn fixed(content: impl Into<String>) -> std::io::Result<Self> {
        let content = content.into();
        Self::start(move |_| StubReply::Content(content.clone()))
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().map(|r| r.clone()).unwrap_or_default()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // unblock accept()
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(
    stream: TcpStream,
    responder: &mut Responder,
    hits: &AtomicUsize,
    requests: &Mutex<Vec<Value>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    let mut length = 0usize;
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let header = line.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    hits.fetch_add(1, Ordering::SeqCst);
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    if let Ok(mut r) = requests.lock() {
        r.push(request.clone());
    }
    let (status, payload) = match responder(&request) {
        StubReply::Content(text) => (
            200,
            json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]})
                .to_string(),
        ),
        StubReply::Status(code) => (code, json!({"error": format!("status {code}")}).to_string()),
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    out.flush()
}
