//! Client for completion servers that can echo the prompt with per-token
//! log-probabilities (OpenAI-style `/v1/completions`, as served by vLLM and
//! similar stacks).
//!
//! The prompt and continuation are sent as one string with `echo: true` and
//! `max_tokens: 0`, so nothing is generated and the server returns a logprob for
//! every prompt token. Tokens whose start offset is at or after the
//! continuation boundary are summed. A token that starts before the boundary
//! but ends after it ("straddles") is dropped and flagged.
//!
//! Logprobs are taken to be natural logs.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{check_request, BackendError, ScoredContinuation, ScoringBackend, TokenLogprob};

pub const API_KEY_ENV: &str = "ATTRIB_API_KEY";
pub const DEFAULT_MAX_RETRIES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Moves a JSON request body to the server and returns `(status, body)`.
/// Only connection-level failures are errors here; HTTP status codes are
/// interpreted by the caller.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &str) -> Result<(u16, String), TransportError>;
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the bearer token, if any, from `ATTRIB_API_KEY`.
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpTransport {
            client,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, body: &str) -> Result<(u16, String), TransportError> {
        let mut req = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError(e.to_string()))?;
        Ok((status, text))
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    echo: bool,
    logprobs: u32,
    temperature: u32,
}

/// The exact JSON body sent for one scoring request.
pub fn completion_request_body(model: &str, text: &str) -> String {
    serde_json::to_string(&CompletionRequest {
        model,
        prompt: text,
        max_tokens: 0,
        echo: true,
        logprobs: 1,
        temperature: 0,
    })
    .expect("request body serializes")
}

/// The `logprobs` object of a completion choice.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EchoLogprobs {
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<Option<f64>>,
    pub text_offset: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    logprobs: Option<EchoLogprobs>,
}

fn parse_response(body: &str) -> Result<EchoLogprobs, BackendError> {
    let resp: CompletionResponse =
        serde_json::from_str(body).map_err(|e| BackendError::Protocol(format!("bad completion response: {e}")))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    choice.logprobs.ok_or(BackendError::LogprobsUnavailable)
}

/// Sums the logprobs of tokens starting at or after character offset
/// `boundary` of `text` (the submitted prompt + continuation).
pub fn align_echo_logprobs(echo: &EchoLogprobs, text: &str, boundary: usize) -> Result<ScoredContinuation, BackendError> {
    let offsets = echo
        .text_offset
        .as_ref()
        .ok_or_else(|| BackendError::Protocol("response has no text_offset".into()))?;
    let n = echo.tokens.len();
    if echo.token_logprobs.len() != n || offsets.len() != n {
        return Err(BackendError::Protocol(format!(
            "token arrays disagree: {} tokens, {} logprobs, {} offsets",
            n,
            echo.token_logprobs.len(),
            offsets.len()
        )));
    }
    if offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(BackendError::Protocol("text_offset is not sorted".into()));
    }
    let text_chars = text.chars().count();

    let mut scored = Vec::new();
    let mut straddle = false;
    let mut warnings = Vec::new();
    for i in 0..n {
        let start = offsets[i];
        let end = offsets
            .get(i + 1)
            .copied()
            .unwrap_or_else(|| start + echo.tokens[i].chars().count());
        if start >= boundary {
            let logprob = echo.token_logprobs[i].ok_or(BackendError::LogprobsUnavailable)?;
            scored.push(TokenLogprob {
                text: echo.tokens[i].clone(),
                logprob,
            });
        } else if end > boundary {
            straddle = true;
            let msg = format!(
                "token {i} {:?} spans [{start}, {end}) across the continuation start {boundary}; excluded",
                echo.tokens[i]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    if scored.is_empty() {
        return Err(BackendError::Protocol(format!(
            "no tokens start at or after offset {boundary} (text has {text_chars} characters)"
        )));
    }
    let mut out = ScoredContinuation::from_tokens(scored);
    out.straddle = straddle;
    out.warnings = warnings;
    Ok(out)
}

pub struct RemoteBackend {
    url: String,
    model: String,
    transport: Box<dyn Transport>,
    max_retries: usize,
    backoff: Duration,
    max_prompt_chars: Option<usize>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("max_retries", &self.max_retries)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(endpoint: &str, model: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        RemoteBackend {
            url: format!("{}/v1/completions", endpoint.trim_end_matches('/')),
            model: model.into(),
            transport,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff: Duration::from_millis(500),
            max_prompt_chars: None,
        }
    }

    /// HTTP client with a 120 s timeout.
    pub fn http(endpoint: &str, model: impl Into<String>) -> Result<Self, BackendError> {
        Ok(Self::new(endpoint, model, Box::new(HttpTransport::new(Duration::from_secs(120))?)))
    }

    /// Delay before the first retry; doubles on each further retry.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_max_retries(mut self, retries: usize) -> Self {
        self.max_retries = retries;
        self
    }

    pub fn with_max_prompt_chars(mut self, limit: Option<usize>) -> Self {
        self.max_prompt_chars = limit;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn post_with_retry(&self, body: &str) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match self.transport.post_json(&self.url, body) {
                Ok((status, text)) if (200..300).contains(&status) => return Ok(text),
                Ok((status, text)) if status == 429 || status >= 500 => {
                    TransportError(format!("HTTP {status}: {}", truncate(&text, 200)))
                }
                Ok((status, text)) => {
                    return Err(BackendError::Protocol(format!("HTTP {status}: {}", truncate(&text, 200))))
                }
                Err(e) => e,
            };
            if attempt > self.max_retries {
                return Err(BackendError::Transport {
                    attempts: attempt,
                    source: err,
                });
            }
            let delay = self.backoff * 2u32.saturating_pow(attempt as u32 - 1);
            log::warn!("request to {} failed ({err}); retrying in {delay:?}", self.url);
            std::thread::sleep(delay);
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    s.char_indices().nth(n).map_or(s, |(i, _)| &s[..i])
}

impl ScoringBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.model
    }

    fn max_prompt_chars(&self) -> Option<usize> {
        self.max_prompt_chars
    }

    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError> {
        check_request(self.max_prompt_chars, prompt, continuation)?;
        let text = format!("{prompt}{continuation}");
        let body = completion_request_body(&self.model, &text);
        let resp = self.post_with_retry(&body)?;
        let echo = parse_response(&resp)?;
        align_echo_logprobs(&echo, &text, prompt.chars().count())
    }
}
