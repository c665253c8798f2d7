//! Helpers for driving the `timely` binary.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

pub fn timely(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timely"))
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("spawning timely")
}

pub fn timely_ok(args: &[&str]) -> String {
    let out = timely(args);
    assert!(
        out.status.success(),
        "timely {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub struct Prepared {
    pub cells: PathBuf,
    pub topology: PathBuf,
    pub truth: PathBuf,
    pub report: PathBuf,
}

/// Simulate a noise-10 chain and run the pipeline on it.
pub fn prepare(dir: &Path, seed: u64) -> Prepared {
    let p = |name: &str| dir.join(name);
    let s = |path: &PathBuf| path.to_str().unwrap().to_string();
    let prepared = Prepared {
        cells: p("cells.csv"),
        topology: p("topology.json"),
        truth: p("truth.csv"),
        report: p("report.json"),
    };
    let seed = seed.to_string();
    timely_ok(&[
        "--seed", &seed, "simulate", "--noise", "10", "--out", &s(&prepared.cells), "--truth", &s(&prepared.truth),
        "--topology-out", &s(&prepared.topology),
    ]);
    timely_ok(&[
        "--seed", &seed, "pipeline", "--cells", &s(&prepared.cells), "--topology", &s(&prepared.topology), "--out",
        &s(&prepared.report),
    ]);
    prepared
}

/// A running `timely serve` process, killed on drop.
pub struct Server {
    pub child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(args: &[&str], envs: &[(&str, &str)]) -> Server {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_timely"));
        cmd.args(["--log-level", "warn", "serve", "--port", "0"])
            .args(args)
            .env_remove("TIMELY_SESSION_DIR")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        for (k, v) in envs {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn().expect("spawning timely serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on http://")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Server { child, addr }
    }

    pub fn request(&self, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
        http(&self.addr, method, path, body)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Minimal HTTP/1.1 client over a fresh connection.
pub fn http(addr: &str, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).expect("connecting to server");
    stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, payload) = raw.split_once("\r\n\r\n").expect("malformed response");
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .expect("malformed status line");
    (status, payload.to_string())
}

/// Export CSV rows (without header) as `(id, observed, final, decision)`.
pub fn export_rows(csv: &str) -> Vec<(String, usize, usize, String)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].to_string())
        })
        .collect()
}
