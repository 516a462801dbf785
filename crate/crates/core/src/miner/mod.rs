//! Function version histories mined from a Git repository.
//!
//! Every definition found in a scanned file at a retained commit becomes a
//! [`FunctionVersion`] keyed by its [`FunctionIdentity`]. Versions are
//! ordered by commit time and collapsed so that no two consecutive versions
//! carry the same text.

mod git;
mod store;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use rayon::prelude::*;

pub use git::{GitError, GitRepo};
pub use store::{StoreError, StoreRecord};

use crate::cpp::{self, ExtractedFunction};

/// Stable identity of a function across commits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionIdentity {
    pub name: String,
    pub arg_types: Vec<String>,
    pub file_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentityError {
    #[error("function name is empty")]
    EmptyName,
    #[error("file path `{0}` contains `::`")]
    AmbiguousPath(String),
    #[error("malformed identity key `{0}`")]
    MalformedKey(String),
}

impl FunctionIdentity {
    pub fn new(
        name: impl Into<String>,
        arg_types: Vec<String>,
        file_path: impl Into<String>,
    ) -> Result<Self, IdentityError> {
        let id = FunctionIdentity { name: name.into(), arg_types, file_path: file_path.into() };
        if id.name.is_empty() {
            return Err(IdentityError::EmptyName);
        }
        if id.file_path.contains("::") {
            return Err(IdentityError::AmbiguousPath(id.file_path));
        }
        Ok(id)
    }

    /// `file_path::name(arg1,arg2,...)`.
    pub fn key(&self) -> String {
        format!("{}::{}({})", self.file_path, self.name, self.arg_types.join(","))
    }

    /// Inverse of [`FunctionIdentity::key`]. Relies on paths never
    /// containing `::` and on type spellings never containing a bare comma.
    pub fn parse_key(key: &str) -> Result<Self, IdentityError> {
        let bad = || IdentityError::MalformedKey(key.to_string());
        let (path, rest) = key.split_once("::").ok_or_else(bad)?;
        if !rest.ends_with(')') {
            return Err(bad());
        }
        // find the `(` matching the final `)`
        let mut depth = 0i32;
        let mut open = None;
        for (i, c) in rest.char_indices().rev() {
            match c {
                ')' => depth += 1,
                '(' => {
                    depth -= 1;
                    if depth == 0 {
                        open = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let open = open.ok_or_else(bad)?;
        let name = &rest[..open];
        let args = &rest[open + 1..rest.len() - 1];
        let arg_types = split_args(args);
        FunctionIdentity::new(name, arg_types, path)
    }
}

fn split_args(args: &str) -> Vec<String> {
    if args.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = args.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ',' && chars.peek() != Some(&' ') {
            out.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    out.push(current);
    out
}

impl fmt::Display for FunctionIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// One snapshot of a function at a commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionVersion {
    pub identity: FunctionIdentity,
    pub commit_id: String,
    pub commit_time: DateTime<Utc>,
    /// Full definition text, signature included.
    pub body_text: String,
    pub body_line_count: usize,
    pub token_estimate: usize,
}

impl FunctionVersion {
    pub fn from_extracted(
        identity: FunctionIdentity,
        commit_id: &str,
        commit_time: DateTime<Utc>,
        f: &ExtractedFunction,
    ) -> Self {
        FunctionVersion {
            identity,
            commit_id: commit_id.to_string(),
            commit_time,
            body_line_count: f.body_line_count(),
            token_estimate: f.full_text.split_whitespace().count(),
            body_text: f.full_text.clone(),
        }
    }

    fn order_key(&self) -> (DateTime<Utc>, &str) {
        (self.commit_time, &self.commit_id)
    }

    /// Re-extracts the stored text.
    pub fn function(&self) -> Result<ExtractedFunction, cpp::ExtractError> {
        let mut fns = cpp::extract_functions(&self.body_text, &self.identity.file_path)?;
        match fns.len() {
            1 => Ok(fns.remove(0)),
            _ => Err(cpp::ExtractError::Unbalanced {
                path: self.identity.file_path.clone(),
                location: cpp::Location { line: 1, column: 1 },
                bracket: '{',
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionHistory {
    pub identity: FunctionIdentity,
    pub versions: Vec<FunctionVersion>,
}

/// Two adjacent versions of one function.
#[derive(Debug, Clone, Copy)]
pub struct ConsecutiveVersionPair<'a> {
    pub identity: &'a FunctionIdentity,
    /// Index of `v1` in its history; `v2` is at `index + 1`.
    pub index: usize,
    pub v1: &'a FunctionVersion,
    pub v2: &'a FunctionVersion,
}

impl ConsecutiveVersionPair<'_> {
    /// `key@i-j`, unique across a store.
    pub fn pair_id(&self) -> String {
        pair_id(&self.identity.key(), self.index)
    }
}

pub fn pair_id(key: &str, index: usize) -> String {
    format!("{key}@{index}-{}", index + 1)
}

/// Sorts by (commit time, commit id) and drops any version whose text
/// equals its immediate predecessor's.
pub fn dedup_consecutive(mut versions: Vec<FunctionVersion>) -> Vec<FunctionVersion> {
    versions.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    versions.dedup_by(|later, earlier| later.body_text == earlier.body_text);
    versions
}

/// Histories keyed and ordered by identity key. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionHistoryStore {
    histories: Vec<FunctionHistory>,
}

impl FunctionHistoryStore {
    /// Groups versions by identity and applies [`dedup_consecutive`].
    pub fn from_versions(versions: impl IntoIterator<Item = FunctionVersion>) -> Self {
        let mut grouped: BTreeMap<String, Vec<FunctionVersion>> = BTreeMap::new();
        for v in versions {
            grouped.entry(v.identity.key()).or_default().push(v);
        }
        let histories = grouped
            .into_values()
            .map(|vs| {
                let versions = dedup_consecutive(vs);
                FunctionHistory { identity: versions[0].identity.clone(), versions }
            })
            .collect();
        FunctionHistoryStore { histories }
    }

    pub fn histories(&self) -> &[FunctionHistory] {
        &self.histories
    }

    pub fn history(&self, key: &str) -> Option<&FunctionHistory> {
        self.histories
            .binary_search_by(|h| h.identity.key().as_str().cmp(key))
            .ok()
            .map(|i| &self.histories[i])
    }

    pub fn version_count(&self) -> usize {
        self.histories.iter().map(|h| h.versions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn versions(&self) -> impl Iterator<Item = (usize, &FunctionVersion)> {
        self.histories.iter().flat_map(|h| h.versions.iter().enumerate())
    }

    /// Every consecutive pair; a history of length L yields L-1 pairs.
    pub fn list_version_pairs(&self) -> Vec<ConsecutiveVersionPair<'_>> {
        self.histories
            .iter()
            .flat_map(|h| {
                h.versions.windows(2).enumerate().map(move |(index, w)| ConsecutiveVersionPair {
                    identity: &h.identity,
                    index,
                    v1: &w[0],
                    v2: &w[1],
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MiningConfig {
    /// File extensions to scan, with leading dots.
    pub extensions: Vec<String>,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            extensions: [".cpp", ".cc", ".cxx", ".h", ".hpp"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl MiningConfig {
    fn wants(&self, path: &str) -> bool {
        self.extensions.iter().any(|ext| path.ends_with(ext.as_str()))
    }
}

/// A file (or function) left out of the store, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipEntry {
    pub path: String,
    pub commit: String,
    pub reason: String,
}

impl fmt::Display for SkipEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}: {}", self.path, self.commit, self.reason.replace('\n', " "))
    }
}

#[derive(Debug)]
pub struct MiningOutcome {
    pub store: FunctionHistoryStore,
    pub skips: Vec<SkipEntry>,
    pub commits_scanned: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error(transparent)]
    Git(#[from] GitError),
}

/// Walks the first-parent chain of HEAD and collects the definitions in
/// every scanned file each commit touches.
pub fn mine_repository(repo_locator: &str, config: &MiningConfig) -> Result<MiningOutcome, MineError> {
    let repo = GitRepo::open(repo_locator)?;
    let commits = repo.first_parent_chain()?;
    let mut versions = Vec::new();
    let mut skips = Vec::new();
    let mut reader = repo.blob_reader()?;

    let mut parent: Option<&str> = None;
    for commit in &commits {
        let changed = repo.changed_files(parent, &commit.id)?;
        let mut files = Vec::new();
        for path in changed.into_iter().filter(|p| config.wants(p)) {
            if let Some(bytes) = reader.read(&commit.id, &path)? {
                match String::from_utf8(bytes) {
                    Ok(text) => files.push((path, text)),
                    Err(_) => skips.push(SkipEntry {
                        path,
                        commit: commit.id.clone(),
                        reason: "not valid UTF-8".into(),
                    }),
                }
            }
        }
        let extracted: Vec<_> = files
            .par_iter()
            .map(|(path, text)| (path, collect_file(path, text, &commit.id, commit.time)))
            .collect();
        for (_, (mut vs, mut sk)) in extracted {
            versions.append(&mut vs);
            skips.append(&mut sk);
        }
        parent = Some(&commit.id);
    }
    Ok(MiningOutcome {
        store: FunctionHistoryStore::from_versions(versions),
        skips,
        commits_scanned: commits.len(),
    })
}

fn collect_file(
    path: &str,
    text: &str,
    commit: &str,
    time: DateTime<Utc>,
) -> (Vec<FunctionVersion>, Vec<SkipEntry>) {
    let skip = |reason: String| SkipEntry { path: path.to_string(), commit: commit.to_string(), reason };
    let fns = match cpp::extract_functions(text, path) {
        Ok(fns) => fns,
        Err(e) => return (Vec::new(), vec![skip(e.to_string())]),
    };
    let mut seen = std::collections::HashSet::new();
    let mut versions = Vec::new();
    let mut skips = Vec::new();
    for f in &fns {
        let identity = match FunctionIdentity::new(f.qualified_name.clone(), f.arg_types.clone(), path) {
            Ok(id) => id,
            Err(e) => {
                skips.push(skip(e.to_string()));
                continue;
            }
        };
        if !cpp::is_syntactically_valid(&f.full_text) {
            skips.push(skip(format!("{} does not re-extract on its own", identity.key())));
            continue;
        }
        if !seen.insert(identity.key()) {
            skips.push(skip(format!("duplicate definition of {} ignored", identity.key())));
            continue;
        }
        versions.push(FunctionVersion::from_extracted(identity, commit, time, f));
    }
    (versions, skips)
}
