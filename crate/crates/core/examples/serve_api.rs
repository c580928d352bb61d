//! Starts the HTTP API on an ephemeral port, sends one request of each
//! kind over a plain TCP connection, and shuts down.
//!
//! ```text
//! cargo run --release --example serve_api -- [run-dir]
//! ```

mod support;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use customnet::experiment::CHECKPOINT_FILE;
use customnet::service::{router, AppState};

fn http(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(addr).expect("connect");
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nhost: {addr}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )
    .expect("send");
    let mut out = String::new();
    s.read_to_string(&mut out).expect("read");
    out
}

fn summarize(resp: &str) -> String {
    let status = resp.lines().next().unwrap_or_default();
    let body = resp.split("\r\n\r\n").nth(1).unwrap_or_default();
    let shown: String = body.chars().take(160).collect();
    format!("{status}\n    {shown}{}", if body.len() > 160 { " ..." } else { "" })
}

fn main() -> customnet::Result<()> {
    let (cfg, dir) = support::run_dir_or_train(std::env::args().nth(1))?;
    let state = Arc::new(AppState::load(cfg, &dir.join(CHECKPOINT_FILE))?);
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).expect("bind");
    let addr = listener.local_addr().expect("address");
    rt.spawn(async move { axum::serve(listener, router(state)).await });
    println!("listening on {addr}");

    let sample = r#"{"object_id": "green-pyramid", "rel_pose": [0.0, 1.2, 0.0],
        "bbox": {"x": 0.25, "y": 0.25, "w": 0.5, "h": 0.5},
        "prompt": "a green pyramid on a gradient background", "steps": 10, "seed": 3}"#;
    let bad = r#"{"object_id": "green-pyramid", "rel_pose": [0.0, 1.2, 0.0],
        "bbox": {"x": 0.75, "y": 0.25, "w": 0.5, "h": 0.5}}"#;
    println!("GET /api/health -> {}", summarize(&http(addr, "GET", "/api/health", "")));
    println!("GET /api/objects -> {}", summarize(&http(addr, "GET", "/api/objects", "")));
    println!("POST /api/sample -> {}", summarize(&http(addr, "POST", "/api/sample", sample)));
    println!("POST /api/sample (box out of frame) -> {}", summarize(&http(addr, "POST", "/api/sample", bad)));
    Ok(())
}
