//! Conditioning prompts built from an author's example texts.
//!
//! Layout (one-shot):
//!
//! ```text
//! <example>\n<connective>\n<query>
//! ```
//!
//! With several examples they are joined by a blank line. The `none` template
//! drops the connective and leaves `<example>\n<query>`. Only the query region
//! is scored; [`Prompt::query_start_offset`] marks where it begins.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SAME_AUTHOR: &str = "Here is the text from the same author:";
const ANALYZE: &str = "Analyze the writing styles of the input texts, disregarding the differences in topic and content.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("no example texts given")]
    NoExamples,
    #[error("example {0} is empty")]
    EmptyExample(usize),
    #[error("unknown template {0:?} (expected none, p1, p2, p3 or p4)")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    None,
    #[default]
    P1,
    P2,
    P3,
    P4,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [TemplateId::None, TemplateId::P1, TemplateId::P2, TemplateId::P3, TemplateId::P4];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::None => "none",
            TemplateId::P1 => "p1",
            TemplateId::P2 => "p2",
            TemplateId::P3 => "p3",
            TemplateId::P4 => "p4",
        }
    }

    pub fn template(self) -> PromptTemplate {
        let connective = match self {
            TemplateId::None => String::new(),
            TemplateId::P1 => SAME_AUTHOR.to_string(),
            TemplateId::P2 => format!("{ANALYZE}\n{SAME_AUTHOR}"),
            TemplateId::P3 => format!("Focus on grammatical styles indicative of authorship. {SAME_AUTHOR}"),
            TemplateId::P4 => format!(
                "{ANALYZE}\nReasoning based on linguistic features such as phrasal verbs, modal verbs, \
                 punctuation, rare words, affixes, quantities, humor, sarcasm, typographical errors, \
                 and misspellings. {SAME_AUTHOR}"
            ),
        };
        PromptTemplate { id: self, connective }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, PromptError> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub connective: String,
}

/// All five templates, `none` first.
pub fn template_catalog() -> Vec<PromptTemplate> {
    TemplateId::ALL.into_iter().map(TemplateId::template).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    full_prefix: String,
    query_start_offset: usize,
}

impl Prompt {
    /// Everything preceding the query text.
    pub fn full_prefix(&self) -> &str {
        &self.full_prefix
    }

    /// Character (not byte) offset at which the query begins.
    pub fn query_start_offset(&self) -> usize {
        self.query_start_offset
    }
}

/// Builds the prompt for one candidate. With `max_example_chars` set, each
/// example is cut to its first `max_example_chars` characters.
pub fn build_prompt<S: AsRef<str>>(
    examples: &[S],
    template: &PromptTemplate,
    max_example_chars: Option<usize>,
) -> Result<Prompt, PromptError> {
    if examples.is_empty() {
        return Err(PromptError::NoExamples);
    }
    let mut parts = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let ex = ex.as_ref();
        let kept = match max_example_chars {
            Some(n) => ex.char_indices().nth(n).map_or(ex, |(b, _)| &ex[..b]),
            None => ex,
        };
        if kept.is_empty() {
            return Err(PromptError::EmptyExample(i));
        }
        parts.push(kept);
    }

    let mut full_prefix = parts.join("\n\n");
    full_prefix.push('\n');
    if template.id != TemplateId::None {
        full_prefix.push_str(&template.connective);
        full_prefix.push('\n');
    }
    let query_start_offset = full_prefix.chars().count();
    Ok(Prompt {
        full_prefix,
        query_start_offset,
    })
}
