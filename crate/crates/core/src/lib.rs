//! Authorship attribution by conditional log-probability.
//!
//! Each candidate author's example texts are turned into a prompt
//! ([`prompting`]); a language model ([`backend`]) scores the query text as a
//! continuation of that prompt; the per-candidate log-probabilities become a
//! posterior and a ranking ([`bayes`]). [`bench`] and [`metrics`] implement the
//! randomized top-k evaluation, and [`ngram`] provides an offline,
//! deterministic character model usable in place of a served LLM.

pub mod backend;
pub mod bayes;
pub mod bench;
pub mod cli;
pub mod corpus;
pub mod metrics;
pub mod ngram;
pub mod prompting;
pub mod synth;

pub use backend::{BackendError, MockBackend, NgramBackend, RemoteBackend, ScoredContinuation, ScoringBackend};
pub use bayes::{posterior, CandidateScore, Posterior};
pub use bench::{build_trial, run_benchmark, run_trial, BenchConfig, OutcomeRecord, Trial, TrialOutcome};
pub use corpus::{load_corpus, Corpus, Document};
pub use metrics::{binomial_stderr, top_k_accuracy, MetricsReport};
pub use ngram::{NgramCounts, NgramModel};
pub use prompting::{build_prompt, template_catalog, Prompt, PromptTemplate, TemplateId};
