//! Minimal scripted HTTP server for protocol tests.

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

pub struct Request {
    pub method: String,
    pub path: String,
    pub body: serde_json::Value,
}

type Handler = dyn Fn(&Request, usize) -> (u16, String) + Send + Sync;

pub struct MockServer {
    server: Arc<tiny_http::Server>,
    pub log: Arc<Mutex<Vec<Request>>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// `handler` gets each request and its 0-based arrival index.
    pub fn start(handler: impl Fn(&Request, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (s, l) = (server.clone(), log.clone());
        let thread = std::thread::spawn(move || {
            for mut req in s.incoming_requests() {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let parsed = Request {
                    method: req.method().to_string(),
                    path: req.url().to_owned(),
                    body: serde_json::from_str(&body).unwrap_or(serde_json::Value::Null),
                };
                let n = {
                    let mut log = l.lock().unwrap();
                    log.push(clone_req(&parsed));
                    log.len() - 1
                };
                let (status, text) = handler(&parsed, n);
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let resp = tiny_http::Response::from_string(text).with_status_code(status).with_header(header);
                let _ = req.respond(resp);
            }
        });
        Self {
            server,
            log,
            thread: Some(thread),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.server.server_addr().to_ip().unwrap())
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().iter().map(clone_req).collect()
    }
}

fn clone_req(r: &Request) -> Request {
    Request {
        method: r.method.clone(),
        path: r.path.clone(),
        body: r.body.clone(),
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
