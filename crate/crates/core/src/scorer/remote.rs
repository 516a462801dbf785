//! HTTP client for a fill-mask model server.
//!
//! `GET /v1/info` returns `{mask_token, max_context, model_id}`;
//! `POST /v1/fill_mask` takes `{code, mask_count, gold_tokens?}` and returns
//! `{probabilities, tokens, model_id}`.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{BackendError, FillMaskResult, MaskedCode, TokenProbabilityBackend, PROBABILITY_FLOOR};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Extra attempts after a connection failure or 5xx response.
    pub retries: u32,
    pub timeout: Duration,
    pub backoff: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig { retries: 3, timeout: Duration::from_secs(120), backoff: Duration::from_millis(200) }
    }
}

#[derive(Debug, Deserialize)]
struct InfoResponse {
    mask_token: String,
    max_context: Option<usize>,
    model_id: String,
}

#[derive(Serialize)]
struct FillRequest<'a> {
    code: &'a str,
    mask_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold_tokens: Option<&'a [String]>,
}

#[derive(Debug, Deserialize)]
struct FillResponse {
    probabilities: Vec<f64>,
    tokens: Vec<String>,
    model_id: String,
}

pub struct RemoteBackend {
    client: Client,
    base: String,
    config: RemoteConfig,
    mask_token: String,
    max_context: Option<usize>,
    model_id: String,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("base", &self.base).field("model_id", &self.model_id).finish()
    }
}

impl RemoteBackend {
    /// Connects and negotiates the mask token and context window.
    pub fn connect(url: &str, config: RemoteConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Connection(e.to_string()))?;
        let base = url.trim_end_matches('/').to_string();
        let info_url = format!("{base}/v1/info");
        let info: InfoResponse = with_retries(&config, || {
            let resp = client.get(&info_url).send().map_err(connection_error)?;
            parse_json(resp)
        })?;
        if info.mask_token.is_empty() {
            return Err(BackendError::Malformed("empty mask token".into()));
        }
        Ok(RemoteBackend {
            client,
            base,
            config,
            mask_token: info.mask_token,
            max_context: info.max_context,
            model_id: info.model_id,
        })
    }
}

fn connection_error(e: reqwest::Error) -> BackendError {
    BackendError::Connection(e.to_string())
}

fn parse_json<T: for<'de> Deserialize<'de>>(resp: reqwest::blocking::Response) -> Result<T, BackendError> {
    let status = resp.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        return Err(BackendError::ContextOverflow);
    }
    let body = resp.text().map_err(connection_error)?;
    if !status.is_success() {
        return Err(BackendError::Status { code: status.as_u16(), body });
    }
    serde_json::from_str(&body).map_err(|e| BackendError::Malformed(e.to_string()))
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Connection(_) => true,
        BackendError::Status { code, .. } => *code >= 500,
        _ => false,
    }
}

fn with_retries<T>(config: &RemoteConfig, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
    let mut attempt = 0;
    loop {
        match call() {
            Err(e) if retryable(&e) && attempt < config.retries => {
                log::warn!("backend attempt {} failed: {e}", attempt + 1);
                std::thread::sleep(config.backoff * 2u32.saturating_pow(attempt));
                attempt += 1;
            }
            other => return other,
        }
    }
}

impl TokenProbabilityBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.model_id
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn max_context(&self) -> Option<usize> {
        self.max_context
    }

    fn fill_mask(&self, masked: &MaskedCode) -> Result<FillMaskResult, BackendError> {
        let url = format!("{}/v1/fill_mask", self.base);
        let request = FillRequest {
            code: &masked.text,
            mask_count: masked.mask_count,
            gold_tokens: masked.gold_tokens.as_deref(),
        };
        let resp: FillResponse = with_retries(&self.config, || {
            let resp = self.client.post(&url).json(&request).send().map_err(connection_error)?;
            parse_json(resp)
        })?;
        if resp.probabilities.len() != masked.mask_count {
            return Err(BackendError::LengthMismatch { expected: masked.mask_count, got: resp.probabilities.len() });
        }
        if resp.tokens.len() != masked.mask_count {
            return Err(BackendError::LengthMismatch { expected: masked.mask_count, got: resp.tokens.len() });
        }
        if let Some(p) = resp.probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(BackendError::Malformed(format!("probability {p} outside [0, 1]")));
        }
        Ok(FillMaskResult {
            probabilities: resp.probabilities.into_iter().map(|p| p.max(PROBABILITY_FLOOR)).collect(),
            tokens: resp.tokens,
            backend_id: resp.model_id,
        })
    }
}
