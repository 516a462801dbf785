#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

/// Builds throwaway git repositories with pinned identities and dates.
pub struct FixtureRepo {
    pub dir: tempfile::TempDir,
    commits: u32,
}

impl FixtureRepo {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let repo = FixtureRepo { dir, commits: 0 };
        repo.git(&["init", "--quiet", "--initial-branch=main"]);
        repo
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn path_str(&self) -> String {
        self.dir.path().display().to_string()
    }

    pub fn git(&self, args: &[&str]) -> String {
        let date = format!("2024-01-01T00:{:02}:00Z", self.commits);
        let out = Command::new("git")
            .arg("-C")
            .arg(self.dir.path())
            .args(["-c", "user.name=Fixture", "-c", "user.email=fixture@example.com", "-c", "commit.gpgsign=false"])
            .args(args)
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_DATE", &date)
            .output()
            .expect("git runs");
        assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    pub fn write(&self, rel: &str, text: &str) {
        let p = self.dir.path().join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }

    pub fn remove(&self, rel: &str) {
        std::fs::remove_file(self.dir.path().join(rel)).unwrap();
    }

    /// Stages everything and commits; returns the new commit id.
    pub fn commit(&mut self, message: &str) -> String {
        self.git(&["add", "-A"]);
        self.git(&["commit", "--quiet", "--allow-empty", "-m", message]);
        self.commits += 1;
        self.git(&["rev-parse", "HEAD"]).trim().to_string()
    }
}

/// A small C++ function whose body varies with `variant`.
pub fn cpp_function(name: &str, variant: usize) -> String {
    let mut body = String::new();
    for i in 0..=variant % 4 {
        body.push_str(&format!("    total += values[{i}] * {};\n", variant + i));
    }
    format!("int {name}(const int *values, int n) {{\n    int total = 0;\n{body}    return total + n;\n}}\n")
}

/// How the fake model server answers `POST /v1/fill_mask`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FakeMode {
    /// Probability 0.5 for every mask.
    Constant,
    /// One probability fewer than requested.
    ShortResponse,
    /// Body that is not JSON.
    Garbage,
    /// 500 for the first two requests, then Constant.
    FlakyThenOk,
    /// 413 whenever the code exceeds 200 bytes.
    SmallWindow,
}

/// Minimal HTTP/1.1 model server on a loopback port. Records every
/// fill-mask request body.
pub struct FakeModelServer {
    pub url: String,
    pub requests: std::sync::Arc<std::sync::Mutex<Vec<serde_json::Value>>>,
}

impl FakeModelServer {
    pub fn start(mode: FakeMode) -> Self {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::sync::{Arc, Mutex};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<serde_json::Value>>> = Arc::default();
        let log = Arc::clone(&requests);
        std::thread::spawn(move || {
            let mut fills = 0usize;
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let mut content_length = 0usize;
                loop {
                    let mut h = String::new();
                    if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            content_length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; content_length];
                let _ = reader.read_exact(&mut body);
                let (status, payload) = if request_line.starts_with("GET /v1/info") {
                    let max = if mode == FakeMode::SmallWindow { 1000 } else { 4096 };
                    (200, format!(r#"{{"mask_token":"[MASK]","max_context":{max},"model_id":"fake-model"}}"#))
                } else if request_line.starts_with("POST /v1/fill_mask") {
                    fills += 1;
                    let req: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
                    log.lock().unwrap().push(req.clone());
                    let n = req["mask_count"].as_u64().unwrap_or(0) as usize;
                    let code_len = req["code"].as_str().map_or(0, str::len);
                    let ok = |k: usize| {
                        let probs = vec!["0.5"; k].join(",");
                        let toks = vec!["\"x\""; k].join(",");
                        (200, format!(r#"{{"probabilities":[{probs}],"tokens":[{toks}],"model_id":"fake-model"}}"#))
                    };
                    match mode {
                        FakeMode::Constant => ok(n),
                        FakeMode::ShortResponse => ok(n.saturating_sub(1)),
                        FakeMode::Garbage => (200, "not json".to_string()),
                        FakeMode::FlakyThenOk if fills <= 2 => (500, "warming up".to_string()),
                        FakeMode::FlakyThenOk => ok(n),
                        FakeMode::SmallWindow if code_len > 200 => (413, "too long".to_string()),
                        FakeMode::SmallWindow => ok(n),
                    }
                } else {
                    (404, "no route".to_string())
                };
                let reason = match status {
                    200 => "OK",
                    404 => "Not Found",
                    413 => "Payload Too Large",
                    _ => "Internal Server Error",
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
            }
        });
        FakeModelServer { url, requests }
    }
}

/// `files` files of `per_file` functions each, edited in every one of
/// `commits` commits, so each function has `commits` versions.
pub fn evolving_repo(files: usize, per_file: usize, commits: usize) -> FixtureRepo {
    let mut repo = FixtureRepo::new();
    for c in 0..commits {
        for f in 0..files {
            let text: String = (0..per_file).map(|i| cpp_function(&format!("compute_{f}_{i}"), c + i) + "\n").collect();
            repo.write(&format!("src/unit_{f}.cpp"), &text);
        }
        repo.commit(&format!("revision {c}"));
    }
    repo
}

/// Runs the built binary with quiet logging.
pub fn cohesion(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cohesion")).args(args).env("RUST_LOG", "warn").env_remove("COHESION_BACKEND_URL").output().expect("binary runs")
}
