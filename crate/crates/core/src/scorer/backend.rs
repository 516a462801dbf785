use serde::{Deserialize, Serialize};

use super::MaskedCode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskResult {
    /// One probability per mask, left to right.
    pub probabilities: Vec<f64>,
    pub tokens: Vec<String>,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Connection(String),
    #[error("backend returned HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend returned {got} probabilities for {expected} masks")]
    LengthMismatch { expected: usize, got: usize },
    #[error("input exceeds the backend context window")]
    ContextOverflow,
}

/// A masked language model queried one masked function at a time.
pub trait TokenProbabilityBackend: Send + Sync {
    fn id(&self) -> &str;
    fn mask_token(&self) -> &str;
    /// Context window in model tokens, when known.
    fn max_context(&self) -> Option<usize> {
        None
    }
    fn fill_mask(&self, masked: &MaskedCode) -> Result<FillMaskResult, BackendError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stand-in model. Probabilities are a pure function of the
/// seed, the masked text, the gold tokens and the mask index, and lie in
/// `(0.01, 0.99)`. They carry no information about the code.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    id: String,
}

impl MockBackend {
    pub const MASK_TOKEN: &'static str = "<mask>";

    pub fn new(seed: u64) -> Self {
        MockBackend { seed, id: format!("mock:{seed}") }
    }

    fn text_key(masked: &MaskedCode) -> u64 {
        let mut h = fnv1a(FNV_OFFSET, masked.text.as_bytes());
        if let Some(gold) = &masked.gold_tokens {
            for t in gold {
                h = fnv1a(h, b"\0");
                h = fnv1a(h, t.as_bytes());
            }
        }
        h
    }
}

impl TokenProbabilityBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn mask_token(&self) -> &str {
        Self::MASK_TOKEN
    }

    fn fill_mask(&self, masked: &MaskedCode) -> Result<FillMaskResult, BackendError> {
        let key = Self::text_key(masked) ^ splitmix64(self.seed);
        let n = masked.mask_count as u64;
        let mut probabilities = Vec::with_capacity(masked.mask_count);
        let mut tokens = Vec::with_capacity(masked.mask_count);
        for i in 0..n {
            let z = splitmix64(key ^ (n << 32 | i));
            let u = ((z >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            probabilities.push(0.01 + 0.98 * u);
            tokens.push(format!("tok{}", z % 1000));
        }
        Ok(FillMaskResult { probabilities, tokens, backend_id: self.id.clone() })
    }
}
