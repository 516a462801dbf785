use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cpp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaliciousSnippet {
    pub id: String,
    /// Dedented; first and last lines are non-blank.
    pub code_lines: Vec<String>,
    pub description: String,
}

impl MaliciousSnippet {
    /// Validates and dedents `text`.
    pub fn parse(id: &str, text: &str, description: &str) -> Result<Self, String> {
        cpp::is_balanced_fragment(text).map_err(|e| e.to_string())?;
        let lines: Vec<&str> = text.lines().map(|l| l.trim_end()).collect();
        let first = lines.iter().position(|l| !l.is_empty()).ok_or("snippet is empty")?;
        let last = lines.iter().rposition(|l| !l.is_empty()).expect("a non-blank line exists");
        let body = &lines[first..=last];
        let margin = body
            .iter()
            .filter(|l| !l.is_empty())
            .map(|l| l.len() - l.trim_start().len())
            .min()
            .unwrap_or(0);
        let code_lines = body.iter().map(|l| if l.is_empty() { String::new() } else { l[margin..].to_string() }).collect();
        Ok(MaliciousSnippet { id: id.to_string(), code_lines, description: description.to_string() })
    }

    pub fn text(&self) -> String {
        self.code_lines.join("\n")
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    #[serde(default)]
    description: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SnippetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest {path}: {reason}")]
    Manifest { path: String, reason: String },
    #[error("no usable snippets in {0}")]
    Empty(String),
}

/// Loaded snippets plus the files that were rejected, with reasons.
#[derive(Debug, Clone, Default)]
pub struct SnippetCorpus {
    pub snippets: Vec<MaliciousSnippet>,
    pub rejected: Vec<(String, String)>,
}

const SNIPPET_EXTENSIONS: [&str; 3] = ["cpp", "cc", "txt"];

/// Loads a manifest file, a directory holding `manifest.json`, or every
/// snippet-like file of a directory in name order. Invalid files are
/// rejected individually; an empty result is an error.
pub fn load_snippets(path: &Path) -> Result<SnippetCorpus, SnippetError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| SnippetError::Io { path: p, source }
    };
    let manifest_path = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
    let entries: Vec<(String, PathBuf, String)> = if manifest_path.is_file() {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let raw = std::fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
        let parsed: Vec<ManifestEntry> = serde_json::from_str(&raw).map_err(|e| SnippetError::Manifest {
            path: manifest_path.display().to_string(),
            reason: e.to_string(),
        })?;
        parsed.into_iter().map(|e| (e.id, base.join(e.file), e.description)).collect()
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|x| x.to_str()).is_some_and(|x| SNIPPET_EXTENSIONS.contains(&x)))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| {
                let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (id, p, String::new())
            })
            .collect()
    };

    let mut corpus = SnippetCorpus::default();
    for (id, file, description) in entries {
        let shown = file.display().to_string();
        if corpus.snippets.iter().any(|s| s.id == id) {
            corpus.rejected.push((shown, format!("duplicate id `{id}`")));
            continue;
        }
        match std::fs::read_to_string(&file) {
            Ok(text) => match MaliciousSnippet::parse(&id, &text, &description) {
                Ok(s) => corpus.snippets.push(s),
                Err(reason) => corpus.rejected.push((shown, reason)),
            },
            Err(e) => corpus.rejected.push((shown, e.to_string())),
        }
    }
    if corpus.snippets.is_empty() {
        return Err(SnippetError::Empty(path.display().to_string()));
    }
    Ok(corpus)
}

macro_rules! builtin {
    ($($id:literal),* $(,)?) => {
        [$(($id, include_str!(concat!("../../snippets/", $id, ".cpp")))),*]
    };
}

const BUILTIN: [(&str, &str); 9] = builtin!(
    "mbr_overwrite",
    "passwd_exfil",
    "setuid_escalation",
    "reverse_shell",
    "download_exec",
    "env_harvest",
    "ssh_key_exfil",
    "ld_preload_hook",
    "anti_debug",
);

const BUILTIN_MANIFEST: &str = include_str!("../../snippets/manifest.json");

/// The shipped corpus of inert snippets, in manifest order.
pub fn builtin_snippets() -> Vec<MaliciousSnippet> {
    let manifest: Vec<ManifestEntry> = serde_json::from_str(BUILTIN_MANIFEST).expect("builtin manifest parses");
    manifest
        .iter()
        .map(|e| {
            let (_, text) = BUILTIN.iter().find(|(id, _)| *id == e.id).expect("every manifest entry is embedded");
            MaliciousSnippet::parse(&e.id, text, &e.description).expect("builtin snippets are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_corpus_shape() {
        let corpus = builtin_snippets();
        assert_eq!(corpus.len(), 9);
        let mean = corpus.iter().map(|s| s.code_lines.len()).sum::<usize>() as f64 / 9.0;
        assert!((5.0..=8.0).contains(&mean), "{mean}");
        for s in &corpus {
            assert!(!s.description.is_empty());
            assert!(cpp::is_balanced_fragment(&s.text()).is_ok());
        }
    }

    #[test]
    fn shipped_directory_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("snippets");
        let loaded = load_snippets(&dir).unwrap();
        assert!(loaded.rejected.is_empty());
        assert_eq!(loaded.snippets, builtin_snippets());
        let via_file = load_snippets(&dir.join("manifest.json")).unwrap();
        assert_eq!(via_file.snippets, loaded.snippets);
    }

    #[test]
    fn dedent_and_trim() {
        let s = MaliciousSnippet::parse("x", "\n    if (a) {\n        b();\n\n    }\n\n", "").unwrap();
        assert_eq!(s.code_lines, ["if (a) {", "    b();", "", "}"]);
    }

    #[test]
    fn bad_files_are_isolated() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(tmp.path().join("a.cpp"), "ok();\n").unwrap();
        std::fs::write(tmp.path().join("b.cpp"), "puts(\"unterminated);\n").unwrap();
        std::fs::write(tmp.path().join("c.txt"), "if (x) {\n").unwrap();
        std::fs::write(tmp.path().join("notes.md"), "ignored").unwrap();
        let corpus = load_snippets(tmp.path()).unwrap();
        assert_eq!(corpus.snippets.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["a"]);
        assert_eq!(corpus.rejected.len(), 2);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_snippets(empty.path()), Err(SnippetError::Empty(_))));
        assert!(load_snippets(&empty.path().join("missing")).is_err());
    }
}
