#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_skillrank")
}

pub fn skillrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).current_dir(dir).args(args).output().expect("spawn skillrank")
}

/// Runs a subcommand and fails with its stderr when it does not exit 0.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = skillrank(dir, args);
    if !out.status.success() {
        panic!(
            "skillrank {} failed ({:?}): {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    String::from_utf8(out.stdout).unwrap()
}

/// Hyperparameters used for every fixture training run.
pub const TRAIN_FLAGS: [&str; 8] = ["--lr", "10", "--batch-size", "8", "--epochs", "100", "--patience", "20"];

/// synth -> split -> embed -> weaklabel -> train -> idf on the
/// 30 x 10 / 150-skill fixture, inside `dir`.
pub fn run_pipeline(dir: &Path) {
    ok(dir, &["synth", "--families", "30", "--synonyms", "10", "--skills", "150", "--seed", "7", "--out", "corpus.jsonl"]);
    ok(dir, &["split", "--in", "corpus.jsonl", "--out-dir", "split", "--seed", "7"]);
    ok(dir, &["embed", "--in", "corpus.jsonl", "--out", "emb.jsonl"]);
    ok(dir, &["weaklabel", "--train", "split/train.jsonl", "--emb", "emb.jsonl", "--out", "labels.jsonl"]);
    let mut train = vec![
        "train", "--labels", "labels.jsonl", "--dev", "split/dev.jsonl", "--emb", "emb.jsonl", "--out", "model.ckpt",
        "--history", "history.json", "--seed", "7",
    ];
    train.extend(TRAIN_FLAGS);
    ok(dir, &train);
    ok(dir, &["idf", "--train", "split/train.jsonl", "--out", "idf.jsonl"]);
}

pub fn titles(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["title"].as_str().unwrap().to_string())
        .collect()
}

/// Skills whose IDF file entry has `f == n_titles`.
pub fn generic_skills(idf: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(idf).unwrap();
    let mut lines = text.lines().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap());
    let n = lines.next().unwrap()["n_titles"].as_u64().unwrap();
    lines
        .filter(|v| v["f"].as_u64() == Some(n))
        .map(|v| v["skill"].as_str().unwrap().to_string())
        .collect()
}

pub fn parse_ranking(stdout: &str) -> Vec<(String, f64)> {
    stdout
        .lines()
        .map(|l| {
            let (s, v) = l.split_once('\t').expect("skill<TAB>score");
            (s.to_string(), v.parse().unwrap())
        })
        .collect()
}

/// A `skillrank serve` child on an ephemeral port.
pub struct Server {
    pub child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(dir: &Path, args: &[&str]) -> Server {
        let mut child = Command::new(bin())
            .current_dir(dir)
            .arg("serve")
            .args(args)
            .args(["--port", "0"])
            .stderr(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .expect("spawn server");
        let mut stderr = BufReader::new(child.stderr.take().unwrap());
        let mut line = String::new();
        stderr.read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect("listen line").to_string();
        std::thread::spawn(move || {
            let mut sink = String::new();
            let _ = stderr.read_to_string(&mut sink);
        });
        Server { child, addr }
    }

    pub fn wait_ready(&self) {
        let deadline = Instant::now() + Duration::from_secs(30);
        while Instant::now() < deadline {
            if let Ok((200, _)) = http(&self.addr, "GET", "/healthz", "") {
                return;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        panic!("server never became healthy");
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Minimal HTTP/1.1 exchange; returns status and body.
pub fn http(addr: &str, method: &str, path: &str, body: &str) -> std::io::Result<(u16, String)> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw)?;
    let status = raw
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let body = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Ok((status, body))
}

pub fn path(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}
