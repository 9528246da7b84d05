//! Scoring backends: `ln P(continuation | prompt)` for a prompt/continuation pair.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod mock;
mod ngram;
mod remote;

pub use mock::MockBackend;
pub use ngram::{adaptive_score, NgramBackend};
pub use remote::{
    align_echo_logprobs, completion_request_body, EchoLogprobs, HttpTransport, RemoteBackend, Transport,
    TransportError,
};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("continuation is empty")]
    EmptyContinuation,
    #[error("prompt too long: {required} characters required, {allowed} allowed")]
    PromptOverflow { required: usize, allowed: usize },
    #[error("transport error after {attempts} attempt(s): {source}")]
    Transport {
        attempts: usize,
        #[source]
        source: TransportError,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server response has no log-probabilities")]
    LogprobsUnavailable,
    #[error("mock table has no entry for {0}")]
    MissingMockEntry(String),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub text: String,
    pub logprob: f64,
}

/// Log-probability of a scored region, optionally with its per-token factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoredContinuation {
    /// Natural log.
    pub total_logprob: f64,
    /// Empty for backends that only report totals.
    pub token_logprobs: Vec<TokenLogprob>,
    pub token_count: usize,
    /// Set when a token spanning the prompt/continuation boundary was dropped.
    pub straddle: bool,
    pub warnings: Vec<String>,
}

impl ScoredContinuation {
    pub fn from_total(total_logprob: f64) -> Self {
        ScoredContinuation {
            total_logprob,
            ..Default::default()
        }
    }

    pub fn from_tokens(tokens: Vec<TokenLogprob>) -> Self {
        ScoredContinuation {
            total_logprob: tokens.iter().map(|t| t.logprob).sum(),
            token_count: tokens.len(),
            token_logprobs: tokens,
            straddle: false,
            warnings: Vec::new(),
        }
    }

    /// Concatenated token texts.
    pub fn scored_text(&self) -> String {
        self.token_logprobs.iter().map(|t| t.text.as_str()).collect()
    }
}

/// A model that can score a continuation given a prompt. Implementations must
/// be safe to call concurrently.
pub trait ScoringBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Upper bound on `prompt + continuation` length in characters, if any.
    fn max_prompt_chars(&self) -> Option<usize> {
        None
    }

    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError>;

    /// Scores on behalf of a specific candidate. Backends that key results by
    /// candidate (the replay mock) override this; everything else ignores the index.
    fn score_candidate(
        &self,
        candidate_index: usize,
        prompt: &str,
        continuation: &str,
    ) -> Result<ScoredContinuation, BackendError> {
        let _ = candidate_index;
        self.score(prompt, continuation)
    }
}

/// Shared precondition checks for `score`.
pub(crate) fn check_request(
    limit: Option<usize>,
    prompt: &str,
    continuation: &str,
) -> Result<(), BackendError> {
    if continuation.is_empty() {
        return Err(BackendError::EmptyContinuation);
    }
    if let Some(allowed) = limit {
        let required = prompt.chars().count() + continuation.chars().count();
        if required > allowed {
            return Err(BackendError::PromptOverflow { required, allowed });
        }
    }
    Ok(())
}

impl<B: ScoringBackend + ?Sized> ScoringBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn max_prompt_chars(&self) -> Option<usize> {
        (**self).max_prompt_chars()
    }
    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError> {
        (**self).score(prompt, continuation)
    }
    fn score_candidate(&self, i: usize, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError> {
        (**self).score_candidate(i, prompt, continuation)
    }
}

/// Wraps a backend and counts score calls.
#[derive(Debug)]
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<B: ScoringBackend> ScoringBackend for CountingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn max_prompt_chars(&self) -> Option<usize> {
        self.inner.max_prompt_chars()
    }
    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score(prompt, continuation)
    }
    fn score_candidate(&self, i: usize, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score_candidate(i, prompt, continuation)
    }
}
