//! Name-prediction cohesion.
//!
//! A function's declaration-site name is replaced by `n` mask placeholders
//! for every `n` in `1..=8`. The backend fills the masks; the harmonic mean
//! of the per-mask probabilities is the confidence at `n`, the best
//! confidence is the function's NPC, and the `n` that achieves it is its
//! optimal token count (OTC).

mod backend;
mod records;
mod remote;

use serde::{Deserialize, Serialize};

pub use backend::{BackendError, FillMaskResult, MockBackend, TokenProbabilityBackend};
pub(crate) use backend::splitmix64;
pub use records::{write_record, PartialRead, RecordError, ScoreRecord, ScoreTable};
pub use remote::{RemoteBackend, RemoteConfig};

use crate::cpp::{self, ExtractedFunction, TokenKind};

/// Mask counts tried per function.
pub const MAX_MASKS: usize = 8;

/// Lower bound applied to every probability before averaging.
pub const PROBABILITY_FLOOR: f64 = 1e-9;

/// Stand-in identifier for body occurrences of the name when masking all
/// occurrences.
pub const NEUTRAL_NAME: &str = "_fn";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedCode {
    pub text: String,
    pub mask_count: usize,
    /// Ground-truth name pieces, when scoring the true name instead of the
    /// model's top-1 guess.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_tokens: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Only the declarator name; recursive calls keep the name.
    #[default]
    DeclarationSite,
    /// Declarator masked, body occurrences renamed to [`NEUTRAL_NAME`].
    AllOccurrences,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilityMode {
    /// Probability of the model's best token at each mask.
    #[default]
    TopOne,
    /// Probability of the true name's pieces.
    GoldTokens,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub mask_mode: MaskMode,
    pub probability_mode: ProbabilityMode,
    /// Refuse constructors, destructors and operators.
    pub exclude_special: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaskError {
    #[error("mask count {0} outside 1..=8")]
    InvalidCount(usize),
    #[error("name `{0}` not found at the declaration site")]
    NameNotAtDeclaration(String),
    #[error("source already contains the mask placeholder `{0}`")]
    PlaceholderCollision(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("confidence needs at least one probability")]
    Empty,
    #[error("probability {0} is not strictly positive")]
    NonPositive(f64),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("backend failed at {mask_count} masks: {source}")]
    Backend {
        mask_count: usize,
        #[source]
        source: BackendError,
    },
    #[error("{0:?} functions are excluded from scoring")]
    Excluded(cpp::FunctionKind),
}

/// Harmonic mean of the probabilities.
pub fn confidence(probabilities: &[f64]) -> Result<f64, ScoreError> {
    if probabilities.is_empty() {
        return Err(ScoreError::Empty);
    }
    let mut reciprocal_sum = 0.0;
    for &p in probabilities {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(p > 0.0) || !p.is_finite() {
            return Err(ScoreError::NonPositive(p));
        }
        reciprocal_sum += 1.0 / p;
    }
    Ok(probabilities.len() as f64 / reciprocal_sum)
}

/// Per-function cohesion: the confidence table, its maximum and where it
/// is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohesionScore {
    /// Entry `n - 1` holds the confidence with `n` masks.
    pub per_n_confidence: [f64; MAX_MASKS],
    pub npc: f64,
    /// 1-based; the smallest `n` attaining `npc`.
    pub otc: u8,
}

impl CohesionScore {
    pub fn from_confidences(per_n_confidence: [f64; MAX_MASKS]) -> Self {
        let mut otc = 0;
        for (i, &c) in per_n_confidence.iter().enumerate() {
            if c > per_n_confidence[otc] {
                otc = i;
            }
        }
        CohesionScore { per_n_confidence, npc: per_n_confidence[otc], otc: otc as u8 + 1 }
    }

    /// Confidence with `n` masks, `n` in `1..=8`.
    pub fn confidence_at(&self, n: u8) -> f64 {
        self.per_n_confidence[n as usize - 1]
    }
}

/// Replaces the declaration-site name with `n` copies of `mask_token`.
pub fn mask_function_name(
    f: &ExtractedFunction,
    n: usize,
    mask_token: &str,
) -> Result<MaskedCode, MaskError> {
    mask_function_name_with(f, n, mask_token, MaskMode::DeclarationSite)
}

pub fn mask_function_name_with(
    f: &ExtractedFunction,
    n: usize,
    mask_token: &str,
    mode: MaskMode,
) -> Result<MaskedCode, MaskError> {
    if !(1..=MAX_MASKS).contains(&n) {
        return Err(MaskError::InvalidCount(n));
    }
    let text = &f.full_text;
    if f.name.is_empty() || text.get(f.name_span.clone()) != Some(f.name.as_str()) {
        return Err(MaskError::NameNotAtDeclaration(f.name.clone()));
    }
    if text.contains(mask_token) {
        return Err(MaskError::PlaceholderCollision(mask_token.to_string()));
    }
    let masks = mask_token.repeat(n);
    let mut out = String::with_capacity(text.len() + masks.len());
    out.push_str(&text[..f.name_span.start]);
    out.push_str(&masks);
    let rest = &text[f.name_span.end..];
    match mode {
        MaskMode::DeclarationSite => out.push_str(rest),
        MaskMode::AllOccurrences => out.push_str(&rename_identifier(rest, &f.name, NEUTRAL_NAME)),
    }
    Ok(MaskedCode { text: out, mask_count: n, gold_tokens: None })
}

fn rename_identifier(text: &str, from: &str, to: &str) -> String {
    let Ok(tokens) = cpp::tokenize(text) else { return text.to_string() };
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Ident && t.text(text) == from) {
        out.push_str(&text[last..t.start]);
        out.push_str(to);
        last = t.end;
    }
    out.push_str(&text[last..]);
    out
}

/// Puts `name` back in place of the placeholder run.
pub fn unmask(masked: &MaskedCode, mask_token: &str, name: &str) -> String {
    masked.text.replacen(&mask_token.repeat(masked.mask_count), name, 1)
}

/// Splits an identifier into `n` pieces along camelCase/snake_case
/// boundaries, merging or splitting pieces to reach exactly `n`. Names
/// shorter than `n` characters are padded with empty pieces.
pub fn gold_tokens(name: &str, n: usize) -> Vec<String> {
    let mut pieces: Vec<String> = Vec::new();
    let chars: Vec<char> = name.chars().collect();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let boundary = i > 0
            && (c == '_' && chars[i - 1] != '_'
                || c.is_uppercase() && chars[i - 1].is_lowercase()
                || c.is_ascii_digit() != chars[i - 1].is_ascii_digit() && chars[i - 1] != '_');
        if boundary && !current.is_empty() {
            pieces.push(std::mem::take(&mut current));
        }
        current.push(c);
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    while pieces.len() > n {
        let last = pieces.pop().unwrap();
        pieces.last_mut().unwrap().push_str(&last);
    }
    while pieces.len() < n {
        let (idx, longest) = pieces
            .iter()
            .enumerate()
            .max_by_key(|(i, p)| (p.chars().count(), std::cmp::Reverse(*i)))
            .map(|(i, p)| (i, p.clone()))
            .unwrap_or((0, String::new()));
        let len = longest.chars().count();
        if len < 2 {
            pieces.push(String::new());
            continue;
        }
        let mid = longest.char_indices().nth(len / 2).unwrap().0;
        pieces[idx] = longest[..mid].to_string();
        pieces.insert(idx + 1, longest[mid..].to_string());
    }
    pieces
}

/// Rough model-token estimate for context budgeting.
fn estimated_model_tokens(text: &str) -> usize {
    text.len().div_ceil(3) + 2
}

/// Keeps the leading lines of `text` that fit `max_tokens`, closing the
/// body with `}`. The first line always survives.
pub fn truncate_to_context(text: &str, max_tokens: usize) -> String {
    if estimated_model_tokens(text) <= max_tokens {
        return text.to_string();
    }
    let lines: Vec<&str> = text.lines().collect();
    let mut keep = lines.len().saturating_sub(1).max(1);
    loop {
        let candidate = format!("{}\n}}", lines[..keep].join("\n"));
        if keep <= 1 || estimated_model_tokens(&candidate) <= max_tokens {
            return candidate;
        }
        keep -= 1;
    }
}

/// Drops roughly a quarter of the remaining lines, for a backend that
/// rejected the text as too long.
fn shrink(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() <= 2 {
        return None;
    }
    let keep = (lines.len() * 3 / 4).max(1).min(lines.len() - 2);
    Some(format!("{}\n}}", lines[..keep].join("\n")))
}

/// Confidence table for `f` at every mask count; any backend failure
/// fails the whole score.
pub fn score(
    f: &ExtractedFunction,
    backend: &dyn TokenProbabilityBackend,
    config: &ScoringConfig,
) -> Result<CohesionScore, ScoreError> {
    if config.exclude_special && f.kind.is_special() {
        return Err(ScoreError::Excluded(f.kind));
    }
    let mut table = [0.0; MAX_MASKS];
    for n in 1..=MAX_MASKS {
        let mut masked = mask_function_name_with(f, n, backend.mask_token(), config.mask_mode)?;
        if config.probability_mode == ProbabilityMode::GoldTokens {
            masked.gold_tokens = Some(gold_tokens(&f.name, n));
        }
        if let Some(limit) = backend.max_context() {
            masked.text = truncate_to_context(&masked.text, limit);
        }
        let result = loop {
            match backend.fill_mask(&masked) {
                Err(BackendError::ContextOverflow) => match shrink(&masked.text) {
                    Some(shorter) => masked.text = shorter,
                    None => {
                        return Err(ScoreError::Backend { mask_count: n, source: BackendError::ContextOverflow })
                    }
                },
                other => break other.map_err(|source| ScoreError::Backend { mask_count: n, source })?,
            }
        };
        let floored: Vec<f64> = result.probabilities.iter().map(|p| p.max(PROBABILITY_FLOOR)).collect();
        table[n - 1] = confidence(&floored)?;
    }
    Ok(CohesionScore::from_confidences(table))
}
