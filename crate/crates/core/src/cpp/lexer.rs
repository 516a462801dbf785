//! A small C++ tokenizer.
//!
//! It recognizes just enough of the lexical grammar to find structure in a
//! translation unit without preprocessing: identifiers, numbers, string and
//! character literals (including raw strings and encoding prefixes),
//! punctuators, comments and preprocessor directives. Comments and
//! directives are kept as tokens so callers can decide whether they matter.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
    Comment,
    Directive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    /// Comments and preprocessor lines carry no syntax for our purposes.
    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Comment | TokenKind::Directive)
    }
}

/// 1-based line and column of a byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl Location {
    pub fn of(src: &str, offset: usize) -> Self {
        let before = &src[..offset.min(src.len())];
        let line = before.bytes().filter(|&b| b == b'\n').count() + 1;
        let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
        Location { line, column }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unterminated block comment starting at {0}")]
    UnterminatedComment(Location),
    #[error("unterminated string literal starting at {0}")]
    UnterminatedString(Location),
    #[error("unterminated character literal starting at {0}")]
    UnterminatedChar(Location),
    #[error("unterminated raw string literal starting at {0}")]
    UnterminatedRawString(Location),
}

impl LexError {
    pub fn location(&self) -> Location {
        match self {
            LexError::UnterminatedComment(l)
            | LexError::UnterminatedString(l)
            | LexError::UnterminatedChar(l)
            | LexError::UnterminatedRawString(l) => *l,
        }
    }
}

const PUNCTS: &[&str] = &[
    "<<=", ">>=", "->*", "...", "<=>", "::", "->", ".*", "++", "--", "<<", ">>", "<=", ">=", "==",
    "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "##",
];

fn is_ident_start(b: u8) -> bool {
    b == b'_' || b == b'$' || b.is_ascii_alphabetic() || b >= 0x80
}

fn is_ident_continue(b: u8) -> bool {
    is_ident_start(b) || b.is_ascii_digit()
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    Lexer { src, bytes: src.as_bytes(), pos: 0, line_start: true, tokens: Vec::new() }.run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    /// Only whitespace seen since the last newline.
    line_start: bool,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn push(&mut self, kind: TokenKind, start: usize) {
        self.tokens.push(Token { kind, start, end: self.pos });
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        while let Some(b) = self.peek(0) {
            let start = self.pos;
            match b {
                b'\n' => {
                    self.pos += 1;
                    self.line_start = true;
                    continue;
                }
                b' ' | b'\t' | b'\r' | 0x0b | 0x0c => {
                    self.pos += 1;
                    continue;
                }
                b'\\' if matches!(self.peek(1), Some(b'\n')) => {
                    self.pos += 2;
                    continue;
                }
                b'\\' if self.peek(1) == Some(b'\r') && self.peek(2) == Some(b'\n') => {
                    self.pos += 3;
                    continue;
                }
                b'#' if self.line_start => {
                    self.directive();
                    self.push(TokenKind::Directive, start);
                    // the directive consumed its newline, if any
                    self.line_start = true;
                    continue;
                }
                b'/' if self.peek(1) == Some(b'/') => {
                    self.line_comment();
                    self.push(TokenKind::Comment, start);
                }
                b'/' if self.peek(1) == Some(b'*') => {
                    self.block_comment(start)?;
                    self.push(TokenKind::Comment, start);
                    // a block comment does not end the "only whitespace so far" state
                    continue;
                }
                b'"' => {
                    self.pos += 1;
                    self.quoted(b'"', start)?;
                    self.push(TokenKind::Str, start);
                }
                b'\'' => {
                    self.pos += 1;
                    self.quoted(b'\'', start)?;
                    self.push(TokenKind::Char, start);
                }
                b'0'..=b'9' => {
                    self.number();
                    self.push(TokenKind::Number, start);
                }
                b'.' if self.peek(1).is_some_and(|c| c.is_ascii_digit()) => {
                    self.number();
                    self.push(TokenKind::Number, start);
                }
                b if is_ident_start(b) => {
                    self.identifier_or_prefixed_literal(start)?;
                }
                _ => {
                    let rest = &self.src[self.pos..];
                    let len = PUNCTS
                        .iter()
                        .find(|p| rest.starts_with(*p))
                        .map_or_else(|| rest.chars().next().map_or(1, char::len_utf8), |p| p.len());
                    self.pos += len;
                    self.push(TokenKind::Punct, start);
                }
            }
            self.line_start = false;
        }
        Ok(self.tokens)
    }

    fn directive(&mut self) {
        // Runs to the end of the line, honoring backslash continuations and
        // block comments that straddle lines.
        while let Some(b) = self.peek(0) {
            match b {
                b'\\' if self.peek(1) == Some(b'\n') => self.pos += 2,
                b'\\' if self.peek(1) == Some(b'\r') && self.peek(2) == Some(b'\n') => self.pos += 3,
                b'/' if self.peek(1) == Some(b'*') => {
                    let start = self.pos;
                    if self.block_comment(start).is_err() {
                        self.pos = self.bytes.len();
                    }
                }
                b'/' if self.peek(1) == Some(b'/') => self.line_comment(),
                b'\n' => {
                    self.pos += 1;
                    return;
                }
                _ => self.pos += 1,
            }
        }
    }

    fn line_comment(&mut self) {
        while let Some(b) = self.peek(0) {
            if b == b'\n' {
                return;
            }
            if b == b'\\' && self.peek(1) == Some(b'\n') {
                self.pos += 2;
                continue;
            }
            self.pos += 1;
        }
    }

    fn block_comment(&mut self, start: usize) -> Result<(), LexError> {
        match self.src[self.pos + 2..].find("*/") {
            Some(i) => {
                self.pos += 2 + i + 2;
                Ok(())
            }
            None => Err(LexError::UnterminatedComment(Location::of(self.src, start))),
        }
    }

    /// Consumes the body of a quoted literal; the opening quote is already eaten.
    fn quoted(&mut self, quote: u8, start: usize) -> Result<(), LexError> {
        let err = || {
            let loc = Location::of(self.src, start);
            if quote == b'"' {
                LexError::UnterminatedString(loc)
            } else {
                LexError::UnterminatedChar(loc)
            }
        };
        loop {
            match self.peek(0) {
                None | Some(b'\n') => return Err(err()),
                Some(b'\\') => {
                    // escaped char, including an escaped newline continuation
                    if self.peek(1).is_none() {
                        return Err(err());
                    }
                    self.pos += 2;
                }
                Some(b) if b == quote => {
                    self.pos += 1;
                    self.literal_suffix();
                    return Ok(());
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    fn raw_string(&mut self, start: usize) -> Result<(), LexError> {
        // self.pos is just past the opening quote of R"delim( ... )delim"
        let open = self.src[self.pos..].find('(');
        let err = LexError::UnterminatedRawString(Location::of(self.src, start));
        let Some(open) = open else { return Err(err) };
        let delim = &self.src[self.pos..self.pos + open];
        if delim.len() > 16 || delim.contains(|c: char| c.is_whitespace() || c == ')' || c == '\\') {
            return Err(err);
        }
        let closing = format!("){delim}\"");
        let body_start = self.pos + open + 1;
        match self.src[body_start..].find(&closing) {
            Some(i) => {
                self.pos = body_start + i + closing.len();
                self.literal_suffix();
                Ok(())
            }
            None => Err(err),
        }
    }

    fn literal_suffix(&mut self) {
        while self.peek(0).is_some_and(is_ident_continue) {
            self.pos += 1;
        }
    }

    fn number(&mut self) {
        // pp-number: digits, identifier chars, dots, digit separators and
        // signed exponents
        while let Some(b) = self.peek(0) {
            match b {
                b'e' | b'E' | b'p' | b'P' if matches!(self.peek(1), Some(b'+') | Some(b'-')) => {
                    self.pos += 2
                }
                b'\'' if self.peek(1).is_some_and(|c| c.is_ascii_alphanumeric()) => self.pos += 1,
                b'.' => self.pos += 1,
                b if is_ident_continue(b) => self.pos += 1,
                _ => break,
            }
        }
    }

    fn identifier_or_prefixed_literal(&mut self, start: usize) -> Result<(), LexError> {
        while self.peek(0).is_some_and(is_ident_continue) {
            self.pos += 1;
        }
        let word = &self.src[start..self.pos];
        let raw_prefixes = ["R", "LR", "uR", "UR", "u8R"];
        let plain_prefixes = ["L", "u", "U", "u8"];
        match self.peek(0) {
            Some(b'"') if raw_prefixes.contains(&word) => {
                self.pos += 1;
                self.raw_string(start)?;
                self.push(TokenKind::Str, start);
            }
            Some(q @ (b'"' | b'\'')) if plain_prefixes.contains(&word) => {
                self.pos += 1;
                self.quoted(q, start)?;
                let kind = if q == b'"' { TokenKind::Str } else { TokenKind::Char };
                self.push(kind, start);
            }
            _ => self.push(TokenKind::Ident, start),
        }
        Ok(())
    }
}
