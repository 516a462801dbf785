//! Inserts malicious snippets into function bodies at line boundaries.
//!
//! Three positions are supported: before the first body line, after the
//! first `ceil(L/2)` body lines, and after the last body line. The inserted
//! bytes form one contiguous range, so deleting that range restores the
//! original text exactly.

mod corpus;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use corpus::{builtin_snippets, load_snippets, MaliciousSnippet, SnippetCorpus, SnippetError};

use crate::cpp::{self, ExtractedFunction, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Beginning,
    Mid,
    End,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Beginning, Position::Mid, Position::End];

    /// Number of original body lines preceding the snippet.
    pub fn insert_line_index(self, body_lines: usize) -> usize {
        match self {
            Position::Beginning => 0,
            Position::Mid => body_lines.div_ceil(2),
            Position::End => body_lines,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Position::Beginning => "beginning",
            Position::Mid => "mid",
            Position::End => "end",
        }
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    /// Pair or identity the injection was applied to, filled in by callers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub snippet_id: String,
    pub position: Position,
    pub insert_line_index: usize,
    /// Byte range of the inserted text in the modified function.
    pub inserted: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub full_text: String,
    pub record: InjectionRecord,
}

impl Injection {
    /// The original text, recovered by deleting the inserted range.
    pub fn original(&self) -> String {
        let r = &self.record.inserted;
        format!("{}{}", &self.full_text[..r.start], &self.full_text[r.end..])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("the original function is not syntactically valid")]
    InvalidOriginal,
    #[error("insertion point after body line {line} would split a construct: {reason}")]
    UnsafePoint { line: usize, reason: String },
    #[error("injected text is not a valid function")]
    InvalidResult,
    #[error("injected body has {got} lines, expected {expected}")]
    LineCount { expected: usize, got: usize },
    #[error("empty snippet corpus")]
    EmptyCorpus,
}

/// Inserts `snippet` at `position`; the result re-extracts as one function
/// with `L + snippet lines` body lines.
pub fn inject(
    f: &ExtractedFunction,
    snippet: &MaliciousSnippet,
    position: Position,
) -> Result<Injection, InjectError> {
    let text = &f.full_text;
    let spans = f.body_line_spans();
    let l = spans.len();
    let j = position.insert_line_index(l);
    let tokens = cpp::tokenize(text).map_err(|_| InjectError::InvalidOriginal)?;
    let open = f.open_brace();

    let indent = reference_indent(f, &spans, j);
    let block = snippet
        .code_lines
        .iter()
        .map(|line| if line.trim().is_empty() { String::new() } else { format!("{indent}{line}") })
        .collect::<Vec<_>>()
        .join("\n");

    let (at, insertion) = if l == 0 {
        let inner = &text[open + 1..text.len() - 1];
        let tail = if inner.contains('\n') { "" } else { "\n" };
        (open + 1, format!("\n{block}{tail}"))
    } else if j < l {
        (spans[j].start, format!("{block}\n"))
    } else {
        (spans[l - 1].end, format!("\n{block}"))
    };
    if l > 0 {
        check_insertion_point(text, &tokens, open, at).map_err(|reason| InjectError::UnsafePoint { line: j, reason })?;
    }

    let mut full_text = String::with_capacity(text.len() + insertion.len());
    full_text.push_str(&text[..at]);
    full_text.push_str(&insertion);
    full_text.push_str(&text[at..]);

    let mut reparsed = cpp::extract_functions(&full_text, "<inject>").map_err(|_| InjectError::InvalidResult)?;
    if reparsed.len() != 1 || reparsed[0].full_text.trim() != full_text.trim() {
        return Err(InjectError::InvalidResult);
    }
    let got = reparsed.remove(0).body_line_count();
    let expected = l + snippet.code_lines.len();
    if got != expected {
        return Err(InjectError::LineCount { expected, got });
    }
    Ok(Injection {
        record: InjectionRecord {
            target: None,
            snippet_id: snippet.id.clone(),
            position,
            insert_line_index: j,
            inserted: at..at + insertion.len(),
        },
        full_text,
    })
}

/// Draws a snippet and a position uniformly, then injects.
pub fn inject_random<R: Rng + ?Sized>(
    f: &ExtractedFunction,
    corpus: &[MaliciousSnippet],
    rng: &mut R,
) -> Result<Injection, InjectError> {
    let (snippet, position) = draw(corpus, rng)?;
    inject(f, snippet, position)
}

/// The (snippet, position) choice made by [`inject_random`].
pub fn draw<'a, R: Rng + ?Sized>(
    corpus: &'a [MaliciousSnippet],
    rng: &mut R,
) -> Result<(&'a MaliciousSnippet, Position), InjectError> {
    if corpus.is_empty() {
        return Err(InjectError::EmptyCorpus);
    }
    let snippet = &corpus[rng.random_range(0..corpus.len())];
    let position = Position::ALL[rng.random_range(0..3)];
    Ok((snippet, position))
}

fn leading_ws(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

/// Indentation of the nearest non-blank body line before the insertion
/// point (the first one for the beginning), else the signature's last line
/// plus four spaces.
fn reference_indent(f: &ExtractedFunction, spans: &[Range<usize>], j: usize) -> String {
    let text = &f.full_text;
    let line_text = |r: &Range<usize>| {
        let line_start = text[..r.start].rfind('\n').map_or(0, |p| p + 1);
        // a body line sharing its line with `{` has no indentation of its own
        if line_start < r.start && !text[line_start..r.start].trim().is_empty() {
            ""
        } else {
            &text[line_start..r.end]
        }
    };
    let before = spans[..j].iter().rev();
    let after = spans[j.min(spans.len())..].iter();
    for r in before.chain(after) {
        if !text[r.clone()].trim().is_empty() {
            return leading_ws(line_text(r)).to_string();
        }
    }
    let sig_last = f.signature_text.rsplit('\n').next().unwrap_or("");
    format!("{}    ", leading_ws(sig_last))
}

/// Rejects offsets inside a multi-line token, inside parentheses or
/// brackets, or in the middle of a statement.
fn check_insertion_point(text: &str, tokens: &[Token], open: usize, at: usize) -> Result<(), String> {
    if let Some(t) = tokens.iter().find(|t| t.start < at && at < t.end) {
        return Err(format!("inside a {:?} token", t.kind));
    }
    let body: Vec<&Token> = tokens.iter().filter(|t| t.start >= open && t.kind != TokenKind::Comment).collect();
    let split = body.partition_point(|t| t.end <= at);
    let (before, after) = body.split_at(split);

    let mut depth = 0i32;
    for t in before {
        match t.text(text) {
            "(" | "[" => depth += 1,
            ")" | "]" => depth -= 1,
            _ => {}
        }
    }
    if depth != 0 {
        return Err("inside parentheses or brackets".into());
    }

    let prev = before.last().expect("the opening brace precedes every body offset");
    let next = after.iter().find(|t| t.kind != TokenKind::Directive);
    let prev_text = prev.text(text);
    let prev_ok = prev.kind == TokenKind::Directive
        || match prev_text {
            ";" | "{" | "}" | "else" | "do" => true,
            ":" => is_label_colon(text, before),
            ")" => closes_control_head(text, before),
            _ => false,
        };
    if !prev_ok {
        return Err(format!("statement continues after `{prev_text}`"));
    }
    if let Some(next) = next {
        let next_text = next.text(text);
        let continues = matches!(next_text, ";" | "," | ")" | "]" | "." | "->" | "?" | "=" | "else" | "catch")
            || (next_text == "while" && prev_text == "}");
        if continues {
            return Err(format!("statement continues with `{next_text}`"));
        }
    }
    Ok(())
}

/// `case X:`, `default:`, access specifiers and goto labels.
fn is_label_colon(text: &str, before: &[&Token]) -> bool {
    let colon = before.len() - 1;
    let start = before[..colon]
        .iter()
        .rposition(|t| t.kind == TokenKind::Directive || matches!(t.text(text), ";" | "{" | "}"))
        .map_or(0, |i| i + 1);
    let stmt = &before[start..colon];
    match stmt.first().map(|t| t.text(text)) {
        Some("case") => true,
        Some("default" | "public" | "private" | "protected") => stmt.len() == 1,
        Some(_) => stmt.len() == 1 && stmt[0].kind == TokenKind::Ident,
        None => false,
    }
}

/// The `)` ends the head of an `if`, `for` or `while`.
fn closes_control_head(text: &str, before: &[&Token]) -> bool {
    let mut depth = 0i32;
    for i in (0..before.len()).rev() {
        match before[i].text(text) {
            ")" => depth += 1,
            "(" => {
                depth -= 1;
                if depth == 0 {
                    return i > 0 && matches!(before[i - 1].text(text), "if" | "for" | "while");
                }
            }
            _ => {}
        }
    }
    false
}
