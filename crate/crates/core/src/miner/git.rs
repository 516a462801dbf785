//! Thin wrapper over the `git` command line.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use chrono::{DateTime, TimeZone, Utc};

#[derive(Debug, thiserror::Error)]
pub enum GitError {
    #[error("`{0}` is not a readable git repository")]
    NotARepository(String),
    #[error("git {args}: {stderr}")]
    Command { args: String, stderr: String },
    #[error("failed to run git: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("unexpected git output: {0}")]
    Parse(String),
}

#[derive(Debug, Clone)]
pub struct CommitInfo {
    pub id: String,
    pub time: DateTime<Utc>,
}

pub struct GitRepo {
    dir: PathBuf,
    // keeps a cloned remote alive for the lifetime of the handle
    _clone: Option<tempfile::TempDir>,
}

fn looks_remote(locator: &str) -> bool {
    locator.contains("://") || (locator.contains('@') && locator.contains(':') && !Path::new(locator).exists())
}

impl GitRepo {
    /// Opens a local repository, or bare-clones a URL into a temporary directory.
    pub fn open(locator: &str) -> Result<Self, GitError> {
        if looks_remote(locator) {
            let tmp = tempfile::tempdir()?;
            let target = tmp.path().join("repo.git");
            let out = Command::new("git")
                .args(["clone", "--quiet", "--bare", locator])
                .arg(&target)
                .output()?;
            if !out.status.success() {
                return Err(GitError::NotARepository(locator.to_string()));
            }
            return Ok(GitRepo { dir: target, _clone: Some(tmp) });
        }
        let dir = PathBuf::from(locator);
        if !dir.is_dir() {
            return Err(GitError::NotARepository(locator.to_string()));
        }
        let repo = GitRepo { dir, _clone: None };
        repo.run(&["rev-parse", "--git-dir"]).map_err(|_| GitError::NotARepository(locator.to_string()))?;
        Ok(repo)
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C").arg(&self.dir);
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<Vec<u8>, GitError> {
        let out = self.command().args(args).output()?;
        if !out.status.success() {
            return Err(GitError::Command {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    /// Commits reachable from HEAD along first parents, oldest first. An
    /// empty repository yields no commits.
    pub fn first_parent_chain(&self) -> Result<Vec<CommitInfo>, GitError> {
        if self.run(&["rev-parse", "--verify", "--quiet", "HEAD"]).is_err() {
            return Ok(Vec::new());
        }
        let out = self.run(&["log", "--first-parent", "--topo-order", "--reverse", "--format=%H %ct", "HEAD"])?;
        let text = String::from_utf8_lossy(&out);
        text.lines()
            .filter(|l| !l.is_empty())
            .map(|line| {
                let (id, ts) = line.split_once(' ').ok_or_else(|| GitError::Parse(line.to_string()))?;
                let secs: i64 = ts.parse().map_err(|_| GitError::Parse(line.to_string()))?;
                let time = Utc.timestamp_opt(secs, 0).single().ok_or_else(|| GitError::Parse(line.to_string()))?;
                Ok(CommitInfo { id: id.to_string(), time })
            })
            .collect()
    }

    /// Paths added or modified by `commit` relative to `parent` (or to the
    /// empty tree for a root commit). Deletions are not reported; renames
    /// show up as additions.
    pub fn changed_files(&self, parent: Option<&str>, commit: &str) -> Result<Vec<String>, GitError> {
        let mut args = vec!["diff-tree", "-r", "--no-commit-id", "--name-status", "--no-renames", "-z"];
        match parent {
            Some(p) => {
                args.push(p);
                args.push(commit);
            }
            None => {
                args.push("--root");
                args.push(commit);
            }
        }
        let out = self.run(&args)?;
        let mut fields = out.split(|&b| b == 0).filter(|f| !f.is_empty());
        let mut paths = Vec::new();
        while let Some(status) = fields.next() {
            let path = fields.next().ok_or_else(|| GitError::Parse("truncated diff-tree output".into()))?;
            if status.first() != Some(&b'D') {
                paths.push(String::from_utf8_lossy(path).into_owned());
            }
        }
        paths.sort();
        Ok(paths)
    }

    pub fn blob_reader(&self) -> Result<BlobReader, GitError> {
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(BlobReader { child, stdin, stdout })
    }
}

/// A long-lived `git cat-file --batch` process.
pub struct BlobReader {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl BlobReader {
    /// Contents of `path` at `commit`, or None when it does not name a blob.
    pub fn read(&mut self, commit: &str, path: &str) -> Result<Option<Vec<u8>>, GitError> {
        writeln!(self.stdin, "{commit}:{path}")?;
        self.stdin.flush()?;
        let mut header = String::new();
        self.stdout.read_line(&mut header)?;
        let header = header.trim_end();
        if header.ends_with(" missing") || header.ends_with(" ambiguous") {
            return Ok(None);
        }
        let mut parts = header.split(' ');
        let (_, kind, size) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(GitError::Parse(header.to_string())),
        };
        let size: usize = size.parse().map_err(|_| GitError::Parse(header.to_string()))?;
        let mut buf = vec![0u8; size + 1];
        self.stdout.read_exact(&mut buf)?;
        buf.pop();
        Ok((kind == "blob").then_some(buf))
    }
}

impl Drop for BlobReader {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
