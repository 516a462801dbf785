//! C++ function-definition extraction.
//!
//! Works on surface text without preprocessing. The token stream is
//! bracket-matched once, then scanned scope by scope: namespaces, linkage
//! blocks and class bodies are entered, while function bodies, initializers
//! and enum bodies are skipped whole. This is why lambdas and function-local
//! definitions never show up in the output.

pub mod lexer;
mod spelling;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use lexer::{tokenize, LexError, Location, Token, TokenKind};
pub use spelling::normalize_spelling;

/// Roles that name prediction handles poorly; callers may filter on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Regular,
    Constructor,
    Destructor,
    Operator,
}

impl FunctionKind {
    pub fn is_special(self) -> bool {
        self != FunctionKind::Regular
    }
}

/// One function definition found in a source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedFunction {
    /// Unqualified declarator name (`bar` for `Foo::bar`, `~Foo`, `operator==`).
    pub name: String,
    /// Enclosing namespaces/classes plus any qualifiers written at the declarator.
    pub qualified_name: String,
    /// Parameter type spellings, names and default values removed.
    pub arg_types: Vec<String>,
    pub kind: FunctionKind,
    /// Text from the start of the declaration through the opening brace.
    pub signature_text: String,
    /// Lines strictly inside the outermost braces.
    pub body_lines: Vec<String>,
    /// `signature_text` + raw body + `}`; an exact slice of the source.
    pub full_text: String,
    /// Byte range of the declaration-site name inside `full_text`.
    pub name_span: Range<usize>,
    /// 1-based line of the first character of `full_text` in the source.
    pub start_line: usize,
}

impl ExtractedFunction {
    /// Raw text between the outermost braces.
    pub fn body_text(&self) -> &str {
        &self.full_text[self.signature_text.len()..self.full_text.len() - 1]
    }

    pub fn body_line_count(&self) -> usize {
        self.body_lines.len()
    }

    pub fn reconstruct(&self) -> String {
        format!("{}{}}}", self.signature_text, self.body_text())
    }

    /// Byte offset of the opening brace inside `full_text`.
    pub fn open_brace(&self) -> usize {
        self.signature_text.len() - 1
    }

    /// Byte ranges (in `full_text`) of each entry of `body_lines`, without
    /// the line terminator.
    pub fn body_line_spans(&self) -> Vec<Range<usize>> {
        body_line_spans(&self.full_text, self.open_brace() + 1, self.full_text.len() - 1)
    }
}

/// Splits `text[lo..hi]` into lines, dropping a whitespace-only partial line
/// right after the opening brace and right before the closing brace.
pub(crate) fn body_line_spans(text: &str, lo: usize, hi: usize) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = lo;
    for (i, b) in text[lo..hi].bytes().enumerate() {
        if b == b'\n' {
            spans.push(start..lo + i);
            start = lo + i + 1;
        }
    }
    spans.push(start..hi);
    let blank = |r: &Range<usize>| text[r.clone()].trim().is_empty();
    if spans.first().is_some_and(blank) {
        spans.remove(0);
    }
    if spans.last().is_some_and(blank) {
        spans.pop();
    }
    // strip CR of CRLF endings
    for span in &mut spans {
        if span.end > span.start && text.as_bytes()[span.end - 1] == b'\r' {
            span.end -= 1;
        }
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("{path}: {source}")]
    Lex {
        path: String,
        #[source]
        source: LexError,
    },
    #[error("{path}:{location}: unmatched `{bracket}`")]
    Unbalanced { path: String, location: Location, bracket: char },
}

impl ExtractError {
    pub fn location(&self) -> Location {
        match self {
            ExtractError::Lex { source, .. } => source.location(),
            ExtractError::Unbalanced { location, .. } => *location,
        }
    }
}

/// Returns every free and member function definition in `source`.
pub fn extract_functions(source: &str, file_path: &str) -> Result<Vec<ExtractedFunction>, ExtractError> {
    let tokens = tokenize(source)
        .map_err(|source| ExtractError::Lex { path: file_path.to_string(), source })?;
    let toks: Vec<Token> = tokens.into_iter().filter(|t| !t.is_trivia()).collect();
    let matching = match_brackets(source, &toks, file_path)?;
    let mut parser = Parser { src: source, toks: &toks, matching: &matching, out: Vec::new() };
    parser.scope(0, toks.len(), &mut Vec::new());
    Ok(parser.out)
}

/// True iff `full_text` is exactly one well-formed function definition:
/// lexable, bracket-balanced, and re-extracting to a single function that
/// spans the whole text.
pub fn is_syntactically_valid(full_text: &str) -> bool {
    match extract_functions(full_text, "<validate>") {
        Ok(fns) => fns.len() == 1 && fns[0].full_text.trim() == full_text.trim(),
        Err(_) => false,
    }
}

/// Lexable, with balanced `()`, `[]` and `{}`.
pub fn is_balanced_fragment(text: &str) -> Result<(), ExtractError> {
    let tokens = tokenize(text)
        .map_err(|source| ExtractError::Lex { path: "<fragment>".into(), source })?;
    let toks: Vec<Token> = tokens.into_iter().filter(|t| !t.is_trivia()).collect();
    match_brackets(text, &toks, "<fragment>").map(|_| ())
}

fn match_brackets(src: &str, toks: &[Token], path: &str) -> Result<Vec<usize>, ExtractError> {
    let mut matching = vec![usize::MAX; toks.len()];
    let mut stack: Vec<(usize, u8)> = Vec::new();
    let unbalanced = |idx: usize, bracket: char| ExtractError::Unbalanced {
        path: path.to_string(),
        location: Location::of(src, toks[idx].start),
        bracket,
    };
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Punct || t.end - t.start != 1 {
            continue;
        }
        let b = src.as_bytes()[t.start];
        match b {
            b'(' | b'[' | b'{' => stack.push((i, b)),
            b')' | b']' | b'}' => {
                let open = match b {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                match stack.pop() {
                    Some((j, o)) if o == open => {
                        matching[i] = j;
                        matching[j] = i;
                    }
                    _ => return Err(unbalanced(i, b as char)),
                }
            }
            _ => {}
        }
    }
    if let Some(&(j, o)) = stack.first() {
        return Err(unbalanced(j, o as char));
    }
    Ok(matching)
}

/// Identifiers that may precede a parenthesized group without naming a function.
const NOT_A_NAME: &[&str] = &[
    "decltype", "sizeof", "alignof", "alignas", "__attribute__", "__declspec", "noexcept", "throw",
    "requires", "static_assert", "typeof", "__typeof__", "__typeof", "_Alignas", "if", "while",
    "for", "switch", "return", "catch", "case", "new", "delete", "__asm__", "asm", "__asm",
];

const BUILTIN_TYPES: &[&str] = &[
    "void", "bool", "char", "wchar_t", "char8_t", "char16_t", "char32_t", "short", "int", "long",
    "signed", "unsigned", "float", "double", "auto", "__int64", "__int128",
];

const QUALIFIERS: &[&str] =
    &["const", "volatile", "struct", "class", "union", "enum", "typename", "register", "restrict", "__restrict"];

const DECL_SPECIFIERS: &[&str] = &[
    "inline", "static", "virtual", "explicit", "constexpr", "consteval", "constinit", "extern",
    "friend", "__inline", "__forceinline", "__inline__",
];

#[derive(Clone)]
enum ScopeName {
    Named(String),
    Anonymous,
}

struct Declarator {
    /// Token index of the first name token (qualifier, `~`, `operator` or identifier).
    qualified_start: usize,
    /// Token index where the unqualified name starts.
    name_start: usize,
    /// Token index one past the last name token (the params `(`).
    params_open: usize,
    name: String,
    qualified: String,
    qualifiers: Vec<String>,
    has_init_list: bool,
    is_operator: bool,
}

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    matching: &'a [usize],
    out: Vec<ExtractedFunction>,
}

impl<'a> Parser<'a> {
    fn text(&self, i: usize) -> &'a str {
        self.toks[i].text(self.src)
    }

    fn is(&self, i: usize, s: &str) -> bool {
        i < self.toks.len() && self.text(i) == s
    }

    fn is_ident(&self, i: usize) -> bool {
        i < self.toks.len() && self.toks[i].kind == TokenKind::Ident
    }

    fn line_of(&self, i: usize) -> usize {
        Location::of(self.src, self.toks[i].start).line
    }

    /// Skips `template < ... >` headers starting at `i`; returns the first
    /// index after them (bounded by `hi`).
    fn skip_template_headers(&self, mut i: usize, hi: usize) -> usize {
        while i < hi && self.is(i, "template") && self.is(i + 1, "<") {
            match self.skip_angles_forward(i + 1, hi) {
                Some(next) => i = next,
                None => return i,
            }
        }
        i
    }

    /// `i` points at `<`; returns the index after the matching `>`.
    fn skip_angles_forward(&self, mut i: usize, hi: usize) -> Option<usize> {
        let mut depth: i32 = 0;
        while i < hi {
            match self.text(i) {
                "<" => depth += 1,
                ">" => depth -= 1,
                ">>" => depth -= 2,
                "(" | "[" | "{" => {
                    i = self.matching[i];
                }
                ";" => return None,
                _ => {}
            }
            i += 1;
            if depth <= 0 {
                return Some(i);
            }
        }
        None
    }

    /// `i` points at `>` or `>>`; returns the index of the matching `<`.
    fn skip_angles_backward(&self, mut i: usize, lo: usize) -> Option<usize> {
        let mut depth: i32 = 0;
        loop {
            match self.text(i) {
                ">" => depth += 1,
                ">>" => depth += 2,
                "<" => depth -= 1,
                ")" | "]" | "}" => i = self.matching[i],
                ";" | "{" => return None,
                _ => {}
            }
            if depth <= 0 {
                return Some(i);
            }
            if i <= lo {
                return None;
            }
            i -= 1;
        }
    }

    fn scope(&mut self, lo: usize, hi: usize, scopes: &mut Vec<ScopeName>) {
        let mut i = lo;
        let mut stmt_start = lo;
        while i < hi {
            let t = self.text(i);
            match t {
                ";" => {
                    i += 1;
                    stmt_start = i;
                }
                "(" | "[" => i = self.matching[i] + 1,
                "public" | "private" | "protected" if self.is(i + 1, ":") && stmt_start == i => {
                    i += 2;
                    stmt_start = i;
                }
                "{" => {
                    let close = self.matching[i];
                    let next = self.brace(stmt_start, i, close, scopes);
                    i = close + 1;
                    if next {
                        stmt_start = i;
                    }
                }
                _ => i += 1,
            }
        }
    }

    /// Handles a `{` at scope level. Returns true when the statement ends at
    /// the matching `}`.
    fn brace(&mut self, stmt_start: usize, open: usize, close: usize, scopes: &mut Vec<ScopeName>) -> bool {
        if stmt_start == open {
            return true;
        }
        let head = self.skip_template_headers(stmt_start, open);
        let mut first = head;
        if self.is(first, "typedef") {
            first += 1;
        }

        // namespaces and linkage blocks
        let ns_at = if self.is(head, "inline") { head + 1 } else { head };
        if self.is(ns_at, "namespace") {
            let name: String = (ns_at + 1..open).map(|k| self.text(k)).collect();
            let before = scopes.len();
            if name.is_empty() {
                scopes.push(ScopeName::Anonymous);
            } else {
                scopes.extend(name.split("::").map(|s| ScopeName::Named(s.to_string())));
            }
            self.scope(open + 1, close, scopes);
            scopes.truncate(before);
            return true;
        }
        if self.is(head, "extern") && open == head + 2 && self.toks[head + 1].kind == TokenKind::Str {
            self.scope(open + 1, close, scopes);
            return true;
        }

        if matches!(self.text(first.min(open)), "class" | "struct" | "union") && first < open {
            if let Some(name) = self.class_head(first + 1, open) {
                scopes.push(name);
                self.scope(open + 1, close, scopes);
                scopes.pop();
                return true;
            }
        }
        if self.is(first, "enum") {
            return false;
        }
        if self.has_top_level_assign(head, open) {
            return false;
        }

        match self.declarator(head, open) {
            Some(decl) => {
                let prev = self.text(open - 1);
                if decl.has_init_list && (self.is_ident(open - 1) || prev == ">" || prev == ">>") {
                    // brace-initialized member in a constructor init list
                    return false;
                }
                self.emit(stmt_start, head, open, close, decl, scopes);
                true
            }
            None => true,
        }
    }

    /// Parses what follows a class-key. Returns the scope name for a class
    /// definition head, or None if this is something else (e.g. an
    /// elaborated return type).
    fn class_head(&self, mut i: usize, open: usize) -> Option<ScopeName> {
        let mut name: Option<String> = None;
        while i < open {
            let t = self.text(i);
            match t {
                ":" => break,
                "[" => i = self.matching[i] + 1,
                "(" => {
                    // macro or attribute argument list
                    if i == 0 || !self.is_ident(i - 1) {
                        return None;
                    }
                    i = self.matching[i] + 1;
                    if i == open {
                        return None;
                    }
                }
                "<" => {
                    i = self.skip_angles_forward(i, open)?;
                }
                "::" => i += 1,
                "final" | "sealed" => i += 1,
                _ if self.is_ident(i) => {
                    if !matches!(t, "alignas" | "__attribute__" | "__declspec") {
                        name = Some(t.to_string());
                    }
                    i += 1;
                }
                _ => return None,
            }
        }
        Some(name.map_or(ScopeName::Anonymous, ScopeName::Named))
    }

    fn has_top_level_assign(&self, lo: usize, hi: usize) -> bool {
        let mut i = lo;
        while i < hi {
            match self.text(i) {
                "(" | "[" => i = self.matching[i],
                "=" if i == 0 || !self.is(i - 1, "operator") => return true,
                _ => {}
            }
            i += 1;
        }
        false
    }

    /// Locates the declarator-id and parameter list in `toks[lo..hi]`.
    fn declarator(&self, lo: usize, hi: usize) -> Option<Declarator> {
        let mut candidate: Option<usize> = None;
        let mut seen_group = false;
        let mut i = lo;
        while i < hi {
            let t = self.text(i);
            match t {
                "(" => {
                    if self.names_function(i, lo) {
                        candidate = Some(i);
                    }
                    seen_group = true;
                    i = self.matching[i] + 1;
                }
                "[" => i = self.matching[i] + 1,
                "->" if seen_group => break,
                ":" if seen_group => break,
                _ => i += 1,
            }
        }
        let params_open = candidate?;
        let has_init_list = {
            let mut j = self.matching[params_open] + 1;
            let mut found = false;
            while j < hi {
                match self.text(j) {
                    "(" | "[" => j = self.matching[j],
                    ":" => {
                        found = true;
                        break;
                    }
                    "->" => break,
                    _ => {}
                }
                j += 1;
            }
            found
        };
        let (name_start, name, is_operator) = self.declarator_name(params_open, lo)?;
        // qualifiers: (Ident [<...>] ::)* before the name
        let mut qualified_start = name_start;
        let mut qualifiers = Vec::new();
        while qualified_start >= lo + 2 && self.is(qualified_start - 1, "::") {
            let mut k = qualified_start - 2;
            if matches!(self.text(k), ">" | ">>") {
                match self.skip_angles_backward(k, lo) {
                    Some(lt) if lt > lo => k = lt - 1,
                    _ => break,
                }
            }
            if !self.is_ident(k) {
                // leading `::` (global qualifier)
                break;
            }
            qualifiers.insert(0, self.text(k).to_string());
            qualified_start = k;
        }
        if qualified_start > lo && self.is(qualified_start - 1, "::") {
            qualified_start -= 1;
        }
        let qualified: Vec<&str> = (qualified_start..params_open).map(|k| self.text(k)).collect();
        Some(Declarator {
            qualified_start,
            name_start,
            params_open,
            name,
            qualified: normalize_spelling(&qualified),
            qualifiers,
            has_init_list,
            is_operator,
        })
    }

    /// Whether the `(` at `i` can start a parameter list.
    fn names_function(&self, i: usize, lo: usize) -> bool {
        if i == lo {
            return false;
        }
        let prev = self.text(i - 1);
        if self.operator_start(i, lo).is_some() {
            return true;
        }
        if self.is_ident(i - 1) {
            return !NOT_A_NAME.contains(&prev) && !BUILTIN_TYPES.contains(&prev) && !QUALIFIERS.contains(&prev);
        }
        if matches!(prev, ">" | ">>") {
            // explicit specialization: name<args>(
            if let Some(lt) = self.skip_angles_backward(i - 1, lo) {
                return lt > lo && self.is_ident(lt - 1) && !self.is(lt - 1, "template");
            }
        }
        false
    }

    /// If the tokens before the `(` at `i` form an operator-function-id,
    /// returns the index of the `operator` keyword.
    fn operator_start(&self, i: usize, lo: usize) -> Option<usize> {
        let mut k = i;
        // `operator()(`: the name itself contains an empty group
        if self.is(i - 1, ")") && self.matching[i - 1] == i - 2 && i >= lo + 3 && self.is(i - 3, "operator") {
            return Some(i - 3);
        }
        let mut steps = 0;
        while k > lo && steps < 6 {
            k -= 1;
            steps += 1;
            let t = self.text(k);
            if t == "operator" {
                return Some(k);
            }
            if matches!(t, "(" | ")" | ";" | "{" | "}" | ",") {
                return None;
            }
        }
        None
    }

    fn declarator_name(&self, params_open: usize, lo: usize) -> Option<(usize, String, bool)> {
        if let Some(op) = self.operator_start(params_open, lo) {
            let rest: Vec<&str> = (op + 1..params_open).map(|k| self.text(k)).collect();
            let rest = normalize_spelling(&rest);
            let sep = if self.is_ident(op + 1) { " " } else { "" };
            return Some((op, format!("operator{sep}{rest}"), true));
        }
        let mut end = params_open - 1;
        if matches!(self.text(end), ">" | ">>") {
            end = self.skip_angles_backward(end, lo)? - 1;
        }
        if !self.is_ident(end) {
            return None;
        }
        if end > lo && self.is(end - 1, "~") {
            return Some((end - 1, format!("~{}", self.text(end)), false));
        }
        Some((end, self.text(end).to_string(), false))
    }

    /// Start token of the function text: the statement start, unless it
    /// begins with a stray macro invocation on an earlier line.
    fn trim_macro_prefix(&self, stmt_start: usize, head: usize, name_at: usize) -> usize {
        if head != stmt_start {
            return stmt_start;
        }
        let mut start = stmt_start;
        let mut i = stmt_start;
        while i < name_at {
            if self.is(i, "(") {
                let close = self.matching[i];
                let macro_like = i > stmt_start
                    && self.is_ident(i - 1)
                    && !NOT_A_NAME.contains(&self.text(i - 1))
                    && !BUILTIN_TYPES.contains(&self.text(i - 1));
                if macro_like && close + 1 < name_at && self.line_of(close + 1) > self.line_of(close) {
                    start = close + 1;
                }
                i = close + 1;
            } else {
                i += 1;
            }
        }
        start
    }

    fn emit(
        &mut self,
        stmt_start: usize,
        head: usize,
        open: usize,
        close: usize,
        decl: Declarator,
        scopes: &[ScopeName],
    ) {
        let first_tok = self.trim_macro_prefix(stmt_start, head, decl.qualified_start);
        let start = self.toks[first_tok].start;
        let open_end = self.toks[open].end;
        let end = self.toks[close].end;
        let full_text = self.src[start..end].to_string();
        let signature_text = self.src[start..open_end].to_string();
        let name_lo = self.toks[decl.name_start].start - start;
        let name_hi = self.toks[decl.params_open - 1].end - start;
        // for `name<args>(` the span covers only the identifier
        let name_span = if decl.is_operator || decl.name.starts_with('~') {
            name_lo..name_hi
        } else {
            name_lo..name_lo + decl.name.len()
        };

        let enclosing_class = match scopes.last() {
            Some(ScopeName::Named(n)) => Some(n.as_str()),
            _ => None,
        };
        let mut has_return_type = false;
        let mut k = head;
        while k < decl.qualified_start {
            let t = self.text(k);
            if t == "[" {
                k = self.matching[k] + 1;
            } else if matches!(t, "__attribute__" | "__declspec" | "alignas") && self.is(k + 1, "(") {
                k = self.matching[k + 1] + 1;
            } else if DECL_SPECIFIERS.contains(&t) || t == "::" {
                k += 1;
            } else {
                has_return_type = true;
                break;
            }
        }
        let kind = if decl.is_operator {
            FunctionKind::Operator
        } else if decl.name.starts_with('~') {
            FunctionKind::Destructor
        } else if decl.qualifiers.last().is_some_and(|q| *q == decl.name)
            || (decl.qualifiers.is_empty() && enclosing_class == Some(decl.name.as_str()))
            || !has_return_type
        {
            FunctionKind::Constructor
        } else {
            FunctionKind::Regular
        };

        let mut qualified_parts: Vec<&str> = scopes
            .iter()
            .filter_map(|s| match s {
                ScopeName::Named(n) => Some(n.as_str()),
                ScopeName::Anonymous => None,
            })
            .collect();
        let declared = decl.qualified.trim_start_matches("::");
        qualified_parts.push(declared);
        let qualified_name = qualified_parts.join("::");

        let params_close = self.matching[decl.params_open];
        let arg_types = self.param_types(decl.params_open + 1, params_close);
        let open_rel = open_end - start - 1;
        let body_lines = body_line_spans(&full_text, open_rel + 1, full_text.len() - 1)
            .into_iter()
            .map(|r| full_text[r].to_string())
            .collect();

        self.out.push(ExtractedFunction {
            name: decl.name,
            qualified_name,
            arg_types,
            kind,
            signature_text,
            body_lines,
            full_text,
            name_span,
            start_line: Location::of(self.src, start).line,
        });
    }

    fn param_types(&self, lo: usize, hi: usize) -> Vec<String> {
        let mut params: Vec<Vec<usize>> = vec![Vec::new()];
        let mut angle = 0i32;
        let mut i = lo;
        while i < hi {
            match self.text(i) {
                "(" | "[" | "{" => {
                    let m = self.matching[i];
                    params.last_mut().unwrap().extend(i..=m);
                    i = m + 1;
                    continue;
                }
                "<" => angle += 1,
                ">" if angle > 0 => angle -= 1,
                ">>" if angle > 0 => angle = (angle - 2).max(0),
                "," if angle == 0 => {
                    params.push(Vec::new());
                    i += 1;
                    continue;
                }
                _ => {}
            }
            params.last_mut().unwrap().push(i);
            i += 1;
        }
        if params.len() == 1 && params[0].is_empty() {
            return Vec::new();
        }
        let types: Vec<String> = params.iter().map(|p| self.param_type(p)).collect();
        if types.len() == 1 && types[0] == "void" {
            return Vec::new();
        }
        types
    }

    fn param_type(&self, idx: &[usize]) -> String {
        // drop a default argument
        let mut toks: Vec<usize> = Vec::new();
        let mut angle = 0i32;
        let mut depth = 0usize;
        for &k in idx {
            match self.text(k) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth = depth.saturating_sub(1),
                "<" if depth == 0 => angle += 1,
                ">" if depth == 0 => angle -= 1,
                ">>" if depth == 0 => angle -= 2,
                "=" if depth == 0 && angle <= 0 => break,
                _ => {}
            }
            toks.push(k);
        }
        // trailing array declarators
        let mut dims_from = toks.len();
        while dims_from > 0 && self.is(toks[dims_from - 1], "]") {
            let open = self.matching[toks[dims_from - 1]];
            match toks.iter().position(|&k| k == open) {
                Some(p) => dims_from = p,
                None => break,
            }
        }
        let (core, dims) = toks.split_at(dims_from);
        let mut core: Vec<usize> = core.to_vec();

        // function pointer / reference: `ret (*name)(args)`
        let ptr_group = core.iter().position(|&k| {
            self.is(k, "(")
                && matches!(self.text(k + 1), "*" | "&" | "^" | "&&")
                || (self.is(k, "(") && self.is_ident(k + 1) && self.is(k + 2, "::"))
        });
        if let Some(p) = ptr_group {
            let open = core[p];
            let close = self.matching[open];
            if close > 0 && self.is_ident(close - 1) && !self.is(close - 2, "::") {
                let name_tok = close - 1;
                if !matches!(self.text(close - 2), "(") {
                    core.retain(|&k| k != name_tok);
                }
            }
        } else if let Some(&last) = core.last() {
            let t = self.text(last);
            let before_is_scope = core.len() >= 2 && self.is(core[core.len() - 2], "::");
            let rest_has_type = core[..core.len() - 1].iter().any(|&k| {
                let s = self.text(k);
                (self.is_ident(k) && !QUALIFIERS.contains(&s)) || matches!(s, ">" | ">>")
            });
            if self.is_ident(last)
                && !BUILTIN_TYPES.contains(&t)
                && !QUALIFIERS.contains(&t)
                && !before_is_scope
                && rest_has_type
            {
                core.pop();
            }
        }
        let mut spelled: Vec<&str> = core.iter().map(|&k| self.text(k)).collect();
        spelled.extend(dims.iter().map(|&k| self.text(k)));
        normalize_spelling(&spelled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(src: &str) -> ExtractedFunction {
        let fns = extract_functions(src, "t.cpp").unwrap();
        assert_eq!(fns.len(), 1, "{fns:#?}");
        fns.into_iter().next().unwrap()
    }

    #[test]
    fn minimal_definition() {
        let f = one("int add(int a,int b){return a+b;}");
        assert_eq!(f.name, "add");
        assert_eq!(f.arg_types, ["int", "int"]);
        assert_eq!(f.body_lines, ["return a+b;"]);
        assert_eq!(f.signature_text, "int add(int a,int b){");
        assert_eq!(f.kind, FunctionKind::Regular);
        assert_eq!(&f.full_text[f.name_span.clone()], "add");
    }

    #[test]
    fn prototypes_only() {
        let src = "#pragma once\nint f(int);\nvoid g(char *s, int n = 3);\nclass A { void h(); };\n";
        assert!(extract_functions(src, "a.h").unwrap().is_empty());
    }

    #[test]
    fn multiline_body_lines() {
        let f = one("void f(int x)\n{\n    int y = x;\n\n    g(y);\n}\n");
        assert_eq!(f.body_lines, ["    int y = x;", "", "    g(y);"]);
        assert_eq!(f.reconstruct(), f.full_text);
    }

    #[test]
    fn empty_bodies_have_no_lines() {
        assert!(one("void f() {}").body_lines.is_empty());
        assert!(one("void f() {\n}").body_lines.is_empty());
        assert!(one("void f() {  }").body_lines.is_empty());
    }

    #[test]
    fn param_spellings() {
        let f = one("static const char * run(const std::map<int,std::string> &m, char* argv[], unsigned int, void (*cb)(int, char), Foo::Bar b = Foo::Bar{1}, ...) { }");
        assert_eq!(
            f.arg_types,
            [
                "const std::map<int, std::string> &",
                "char *[]",
                "unsigned int",
                "void (*)(int, char)",
                "Foo::Bar",
                "..."
            ]
        );
        assert_eq!(one("int main(void) { return 0; }").arg_types, Vec::<String>::new());
        assert_eq!(one("void f(const Foo) {}").arg_types, ["const Foo"]);
        assert_eq!(one("template <typename... Args> void f(Args&&... args) {}").arg_types, ["Args &&..."]);
    }

    #[test]
    fn class_members_and_qualification() {
        let src = r#"
namespace outer { namespace inner {
class Widget : public Base<Widget> {
public:
    Widget(int w) : width_(w), cache_{} {}
    ~Widget() { release(); }
    int width() const { return width_; }
    bool operator==(const Widget &o) const { return width_ == o.width_; }
    explicit operator bool() const { return width_ != 0; }
private:
    int width_ = 0;
    std::vector<int> cache_{1, 2};
};
void Widget2::draw(int) const {}
} }
"#;
        let fns = extract_functions(src, "w.cpp").unwrap();
        let summary: Vec<(&str, &str, FunctionKind)> =
            fns.iter().map(|f| (f.name.as_str(), f.qualified_name.as_str(), f.kind)).collect();
        assert_eq!(
            summary,
            [
                ("Widget", "outer::inner::Widget::Widget", FunctionKind::Constructor),
                ("~Widget", "outer::inner::Widget::~Widget", FunctionKind::Destructor),
                ("width", "outer::inner::Widget::width", FunctionKind::Regular),
                ("operator==", "outer::inner::Widget::operator==", FunctionKind::Operator),
                ("operator bool", "outer::inner::Widget::operator bool", FunctionKind::Operator),
                ("draw", "outer::inner::Widget2::draw", FunctionKind::Regular),
            ]
        );
        assert!(fns[0].full_text.starts_with("Widget(int w)"));
        assert!(fns[0].full_text.ends_with("cache_{} {}"));
    }

    #[test]
    fn skips_lambdas_locals_and_initializers() {
        let src = r#"
auto cb = [](int x) { return x + 1; };
int table[] = {1, 2, 3};
struct Point { int x, y; } origin = {0, 0};
enum class Color : int { Red, Green };
int outer(int v) {
    struct Local { int get() { return 1; } };
    auto l = [&](int q) { return q * v; };
    return l(v) + Local{}.get();
}
"#;
        let fns = extract_functions(src, "l.cpp").unwrap();
        assert_eq!(fns.len(), 1);
        assert_eq!(fns[0].name, "outer");
    }

    #[test]
    fn templates_keep_header() {
        let f = one("template <typename T, typename U = std::vector<T>>\nT largest(const U &xs) {\n  return xs[0];\n}\n");
        assert_eq!(f.name, "largest");
        assert!(f.signature_text.starts_with("template <typename T"));
        assert_eq!(f.arg_types, ["const U &"]);
    }

    #[test]
    fn trailing_return_and_specifiers() {
        let f = one("auto sum(int a, int b) noexcept(true) -> decltype(a + b) {\n  return a + b;\n}");
        assert_eq!(f.name, "sum");
        assert_eq!(f.kind, FunctionKind::Regular);
        let g = one("std::function<void(int)> make(int x) __attribute__((noinline)) { return {}; }");
        assert_eq!(g.name, "make");
        assert_eq!(g.arg_types, ["int"]);
    }

    #[test]
    fn macro_prefix_is_trimmed() {
        let src = "Q_DECLARE_METATYPE(Foo)\nvoid f() {\n}\n";
        let f = one(src);
        assert_eq!(f.signature_text, "void f() {");
    }

    #[test]
    fn extern_c_and_anonymous_namespace() {
        let src = "extern \"C\" {\nint c_api(int x) { return x; }\n}\nnamespace {\nvoid hidden() {}\n}\n";
        let fns = extract_functions(src, "c.cpp").unwrap();
        let names: Vec<&str> = fns.iter().map(|f| f.qualified_name.as_str()).collect();
        assert_eq!(names, ["c_api", "hidden"]);
    }

    #[test]
    fn elaborated_return_type_is_not_a_class() {
        let f = one("struct node *new_node(int v) {\n  return 0;\n}");
        assert_eq!(f.name, "new_node");
        assert_eq!(f.kind, FunctionKind::Regular);
    }

    #[test]
    fn parse_failures_report_first_location() {
        let err = extract_functions("void f() {\n  if (x) {\n}\n", "bad.cpp").unwrap_err();
        assert!(matches!(err, ExtractError::Unbalanced { bracket: '{', .. }));
        let err = extract_functions("void f() {\n  puts(\"oops);\n}\n", "bad.cpp").unwrap_err();
        assert_eq!(err.location(), Location { line: 2, column: 8 });
    }

    #[test]
    fn validity() {
        let text = "int add(int a, int b) {\n  return a + b;\n}";
        assert!(is_syntactically_valid(text));
        assert!(!is_syntactically_valid(&text[..text.len() - 1]));
        assert!(!is_syntactically_valid("int a() {}\nint b() {}"));
        assert!(!is_syntactically_valid("int f() { return \"x; }"));
        assert!(!is_syntactically_valid("int x = 3;"));
    }

    #[test]
    fn recursion_site_kept_out_of_name_span() {
        let f = one("int fact(int n){return n<2?1:n*fact(n-1);}");
        assert_eq!(f.name_span, 4..8);
    }
}
