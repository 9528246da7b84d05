//! Character-level n-gram language model with additive smoothing.
//!
//! A model of order `n` conditions each character on the preceding `n - 1`
//! characters. Training tallies every length-`n` window inside each text
//! separately; no window crosses a text boundary.
//!
//! Conditional probabilities are
//!
//! ```text
//! P(s | ctx) = (count(ctx, s) + alpha) / (count(ctx) + alpha * |V|)
//! ```
//!
//! A symbol outside the vocabulary is scored as if the vocabulary had been
//! extended by that one symbol, i.e. `alpha / (count(ctx) + alpha * (|V| + 1))`,
//! which keeps every score finite.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NgramError {
    #[error("order must be at least 1")]
    InvalidOrder,
    #[error("alpha must be a positive finite number, got {0}")]
    InvalidAlpha(f64),
    #[error("no training texts given")]
    NoTexts,
    #[error("every training text is shorter than the model order {0}")]
    NoWindows(usize),
    #[error("continuation is empty")]
    EmptyContinuation,
    #[error("malformed model dump: {0}")]
    Dump(String),
}

/// Read access to the statistics a smoothed n-gram scorer needs. Implemented by
/// [`NgramModel`] and by [`Adapted`], an overlay of extra counts on a base model.
pub trait NgramCounts {
    fn order(&self) -> usize;
    fn alpha(&self) -> f64;
    fn context_count(&self, context: &str) -> u64;
    fn transition_count(&self, context: &str, symbol: char) -> u64;
    fn vocab_len(&self) -> usize;
    fn in_vocab(&self, symbol: char) -> bool;

    /// Natural-log probability of `symbol` after `context`. Only the last
    /// `order - 1` characters of `context` are used.
    fn char_logprob(&self, context: &str, symbol: char) -> f64 {
        let ctx = tail(context, self.order() - 1);
        let total = self.context_count(ctx) as f64;
        let alpha = self.alpha();
        if self.in_vocab(symbol) {
            let hits = self.transition_count(ctx, symbol) as f64;
            ((hits + alpha) / (total + alpha * self.vocab_len() as f64)).ln()
        } else {
            (alpha / (total + alpha * (self.vocab_len() + 1) as f64)).ln()
        }
    }

    /// Per-character log-probabilities of `continuation` following `prefix`.
    fn char_logprobs(&self, prefix: &str, continuation: &str) -> Result<Vec<(char, f64)>, NgramError> {
        if continuation.is_empty() {
            return Err(NgramError::EmptyContinuation);
        }
        let width = self.order() - 1;
        let mut window: Vec<char> = tail(prefix, width).chars().collect();
        let mut ctx = String::new();
        let mut out = Vec::with_capacity(continuation.len());
        for symbol in continuation.chars() {
            ctx.clear();
            ctx.extend(window.iter());
            out.push((symbol, self.char_logprob(&ctx, symbol)));
            if width > 0 {
                if window.len() == width {
                    window.remove(0);
                }
                window.push(symbol);
            }
        }
        Ok(out)
    }

    /// Log-probability of the whole continuation: the sum of its per-character
    /// conditional log-probabilities.
    fn sequence_logprob(&self, prefix: &str, continuation: &str) -> Result<f64, NgramError> {
        Ok(self.char_logprobs(prefix, continuation)?.iter().map(|(_, lp)| lp).sum())
    }
}

/// The last `n` characters of `s`.
fn tail(s: &str, n: usize) -> &str {
    if n == 0 {
        return &s[s.len()..];
    }
    match s.char_indices().rev().nth(n - 1) {
        Some((i, _)) => &s[i..],
        None => s,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    alpha: f64,
    vocab: BTreeSet<char>,
    context_counts: HashMap<String, u64>,
    transition_counts: HashMap<String, HashMap<char, u64>>,
}

impl NgramModel {
    /// A model with no counts and an empty vocabulary.
    pub fn empty(order: usize, alpha: f64) -> Result<Self, NgramError> {
        if order == 0 {
            return Err(NgramError::InvalidOrder);
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(NgramError::InvalidAlpha(alpha));
        }
        Ok(NgramModel {
            order,
            alpha,
            vocab: BTreeSet::new(),
            context_counts: HashMap::new(),
            transition_counts: HashMap::new(),
        })
    }

    pub fn train<S: AsRef<str>>(texts: &[S], order: usize, alpha: f64) -> Result<Self, NgramError> {
        let mut model = Self::empty(order, alpha)?;
        if texts.is_empty() {
            return Err(NgramError::NoTexts);
        }
        let mut windows = 0;
        for t in texts {
            windows += model.add_text(t.as_ref());
        }
        if windows == 0 {
            return Err(NgramError::NoWindows(order));
        }
        Ok(model)
    }

    /// Returns a new model whose counts equal training on the original texts
    /// plus `text`. `self` is left untouched.
    pub fn ingest(&self, text: &str) -> Self {
        let mut model = self.clone();
        model.add_text(text);
        model
    }

    /// Tallies the windows of one text; returns how many were added.
    fn add_text(&mut self, text: &str) -> usize {
        let chars: Vec<char> = text.chars().collect();
        self.vocab.extend(chars.iter().copied());
        tally_windows(&chars, self.order, |ctx, symbol| {
            *self.context_counts.entry(ctx.to_string()).or_insert(0) += 1;
            *self
                .transition_counts
                .entry(ctx.to_string())
                .or_default()
                .entry(symbol)
                .or_insert(0) += 1;
        })
    }

    pub fn vocab(&self) -> &BTreeSet<char> {
        &self.vocab
    }

    pub fn transition_counts(&self) -> &HashMap<String, HashMap<char, u64>> {
        &self.transition_counts
    }

    pub fn context_counts(&self) -> &HashMap<String, u64> {
        &self.context_counts
    }

    /// Views this model with the windows of `text` added, without copying the
    /// base counts. Scores are identical to those of `self.ingest(text)`.
    pub fn adapted(&self, text: &str) -> Adapted<'_> {
        let mut delta = NgramModel {
            order: self.order,
            alpha: self.alpha,
            vocab: BTreeSet::new(),
            context_counts: HashMap::new(),
            transition_counts: HashMap::new(),
        };
        delta.add_text(text);
        let extra_vocab = delta.vocab.difference(&self.vocab).count();
        Adapted {
            base: self,
            delta,
            vocab_len: self.vocab.len() + extra_vocab,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDump::from(self)).expect("model dump is always serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, NgramError> {
        let dump: ModelDump = serde_json::from_str(s).map_err(|e| NgramError::Dump(e.to_string()))?;
        dump.try_into()
    }
}

fn tally_windows(chars: &[char], order: usize, mut f: impl FnMut(&str, char)) -> usize {
    if chars.len() < order {
        return 0;
    }
    let mut ctx = String::new();
    for w in chars.windows(order) {
        ctx.clear();
        ctx.extend(&w[..order - 1]);
        f(&ctx, w[order - 1]);
    }
    chars.len() + 1 - order
}

impl NgramCounts for NgramModel {
    fn order(&self) -> usize {
        self.order
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn context_count(&self, context: &str) -> u64 {
        self.context_counts.get(context).copied().unwrap_or(0)
    }
    fn transition_count(&self, context: &str, symbol: char) -> u64 {
        self.transition_counts
            .get(context)
            .and_then(|m| m.get(&symbol))
            .copied()
            .unwrap_or(0)
    }
    fn vocab_len(&self) -> usize {
        self.vocab.len()
    }
    fn in_vocab(&self, symbol: char) -> bool {
        self.vocab.contains(&symbol)
    }
}

/// A base model plus the counts of one extra text.
#[derive(Debug, Clone)]
pub struct Adapted<'a> {
    base: &'a NgramModel,
    delta: NgramModel,
    vocab_len: usize,
}

impl NgramCounts for Adapted<'_> {
    fn order(&self) -> usize {
        self.base.order
    }
    fn alpha(&self) -> f64 {
        self.base.alpha
    }
    fn context_count(&self, context: &str) -> u64 {
        self.base.context_count(context) + self.delta.context_count(context)
    }
    fn transition_count(&self, context: &str, symbol: char) -> u64 {
        self.base.transition_count(context, symbol) + self.delta.transition_count(context, symbol)
    }
    fn vocab_len(&self) -> usize {
        self.vocab_len
    }
    fn in_vocab(&self, symbol: char) -> bool {
        self.base.in_vocab(symbol) || self.delta.in_vocab(symbol)
    }
}

/// On-disk JSON layout: sorted vocabulary and nested sorted count maps.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDump {
    order: usize,
    alpha: f64,
    vocab: Vec<char>,
    context_counts: BTreeMap<String, u64>,
    transition_counts: BTreeMap<String, BTreeMap<char, u64>>,
}

impl From<&NgramModel> for ModelDump {
    fn from(m: &NgramModel) -> Self {
        ModelDump {
            order: m.order,
            alpha: m.alpha,
            vocab: m.vocab.iter().copied().collect(),
            context_counts: m.context_counts.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            transition_counts: m
                .transition_counts
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|(s, c)| (*s, *c)).collect()))
                .collect(),
        }
    }
}

impl TryFrom<ModelDump> for NgramModel {
    type Error = NgramError;

    fn try_from(d: ModelDump) -> Result<Self, NgramError> {
        let mut model = NgramModel::empty(d.order, d.alpha)?;
        model.vocab = d.vocab.into_iter().collect();
        for (ctx, row) in d.transition_counts {
            let sum: u64 = row.values().sum();
            if d.context_counts.get(&ctx).copied().unwrap_or(0) != sum {
                return Err(NgramError::Dump(format!(
                    "context {ctx:?} count does not match its transitions"
                )));
            }
            model.transition_counts.insert(ctx, row.into_iter().collect());
        }
        if d.context_counts.len() != model.transition_counts.len() {
            return Err(NgramError::Dump("context without transitions".into()));
        }
        model.context_counts = d.context_counts.into_iter().collect();
        Ok(model)
    }
}
