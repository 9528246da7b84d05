use super::{check_request, BackendError, ScoredContinuation, ScoringBackend, TokenLogprob};
use crate::ngram::{NgramCounts, NgramError, NgramModel};

/// Scores with a character n-gram model. Tokens are single characters.
///
/// In adaptive mode the prompt is first ingested into (a view of) the model,
/// so the example texts shape the statistics used for the continuation.
#[derive(Debug, Clone)]
pub struct NgramBackend {
    model: NgramModel,
    adaptive: bool,
    max_prompt_chars: Option<usize>,
    name: String,
}

impl NgramBackend {
    pub fn new(model: NgramModel, adaptive: bool) -> Self {
        let name = format!("ngram{}", if adaptive { "-adaptive" } else { "" });
        NgramBackend {
            model,
            adaptive,
            max_prompt_chars: None,
            name,
        }
    }

    pub fn with_max_prompt_chars(mut self, limit: Option<usize>) -> Self {
        self.max_prompt_chars = limit;
        self
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }
}

fn to_scored(chars: Vec<(char, f64)>) -> ScoredContinuation {
    ScoredContinuation::from_tokens(
        chars
            .into_iter()
            .map(|(c, logprob)| TokenLogprob {
                text: c.to_string(),
                logprob,
            })
            .collect(),
    )
}

fn map_err(e: NgramError) -> BackendError {
    match e {
        NgramError::EmptyContinuation => BackendError::EmptyContinuation,
        other => BackendError::Config(other.to_string()),
    }
}

/// Ingests `prompt` into a view of `base_model` and scores `continuation`
/// after it. `base_model` is not modified.
pub fn adaptive_score(
    base_model: &NgramModel,
    prompt: &str,
    continuation: &str,
) -> Result<ScoredContinuation, BackendError> {
    check_request(None, prompt, continuation)?;
    let view = base_model.adapted(prompt);
    view.char_logprobs(prompt, continuation).map(to_scored).map_err(map_err)
}

impl ScoringBackend for NgramBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn max_prompt_chars(&self) -> Option<usize> {
        self.max_prompt_chars
    }

    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError> {
        check_request(self.max_prompt_chars, prompt, continuation)?;
        if self.adaptive {
            adaptive_score(&self.model, prompt, continuation)
        } else {
            self.model
                .char_logprobs(prompt, continuation)
                .map(to_scored)
                .map_err(map_err)
        }
    }
}
