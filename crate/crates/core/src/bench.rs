//! Randomized attribution benchmark.
//!
//! Each trial:
//! 1. samples `num_candidates` authors uniformly without replacement,
//! 2. samples `shots` example documents per candidate,
//! 3. picks the test author uniformly among the candidates,
//! 4. picks a query document of the test author outside its examples,
//! 5. scores the query against every candidate and ranks them.
//!
//! Trial `i` draws from its own RNG stream seeded by `(seed, i)`, so any trial
//! can be rerun alone and results do not depend on scheduling.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ScoringBackend};
use crate::bayes::{posterior_from_log_evidence, BayesError};
use crate::corpus::{Corpus, Document};
use crate::prompting::{build_prompt, PromptError, PromptTemplate, TemplateId};

/// Resampling budget when a sampled candidate set contains an author without
/// enough documents.
pub const MAX_CANDIDATE_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error("{eligible} eligible authors, {required} candidates requested")]
    InsufficientAuthors { eligible: usize, required: usize },
    #[error("no candidate set with {needed} documents per author found in {attempts} attempts")]
    AuthorLacksDocuments { needed: usize, attempts: usize },
    #[error("candidate {candidate}: {source}")]
    Backend {
        candidate: usize,
        #[source]
        source: BackendError,
    },
    #[error("candidate {candidate}: {source}")]
    Prompt {
        candidate: usize,
        #[source]
        source: PromptError,
    },
    #[error("{} trial(s) failed; first: trial {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Trials(Vec<(usize, BenchError)>),
    #[error(transparent)]
    Posterior(#[from] BayesError),
    #[error("outcome log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// True when the failure came from the scoring backend rather than from
    /// configuration or data.
    pub fn is_backend_failure(&self) -> bool {
        match self {
            BenchError::Backend { .. } => true,
            BenchError::Trials(errs) => errs.iter().any(|(_, e)| e.is_backend_failure()),
            _ => false,
        }
    }
}

/// Restricts the candidate pool to documents whose metadata value for `key`
/// is one of `allowed` (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFilter {
    pub key: String,
    pub allowed: Vec<String>,
}

impl CandidateFilter {
    pub fn matches(&self, doc: &Document) -> bool {
        doc.meta
            .get(&self.key)
            .is_some_and(|v| self.allowed.iter().any(|a| a.eq_ignore_ascii_case(v.trim())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub num_candidates: usize,
    pub shots: usize,
    pub num_tests: usize,
    pub seed: u64,
    pub template: TemplateId,
    pub candidate_filter: Option<CandidateFilter>,
    pub max_example_chars: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            num_candidates: 10,
            shots: 1,
            num_tests: 100,
            seed: 0,
            template: TemplateId::P1,
            candidate_filter: None,
            max_example_chars: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.num_candidates < 2 {
            return Err(BenchError::InvalidConfig("num_candidates must be at least 2".into()));
        }
        if self.shots < 1 {
            return Err(BenchError::InvalidConfig("shots must be at least 1".into()));
        }
        if self.num_tests < 1 {
            return Err(BenchError::InvalidConfig("num_tests must be at least 1".into()));
        }
        if self.max_example_chars == Some(0) {
            return Err(BenchError::InvalidConfig("max_example_chars must be positive".into()));
        }
        Ok(())
    }
}

/// Seed of trial `index`'s private RNG stream (SplitMix64 finalizer over the
/// run seed and the trial index).
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub candidate_authors: Vec<String>,
    /// `example_docs[i]` are the examples shown for candidate `i`.
    pub example_docs: Vec<Vec<Document>>,
    pub true_candidate_index: usize,
    pub query_doc: Document,
}

impl Trial {
    pub fn num_candidates(&self) -> usize {
        self.candidate_authors.len()
    }

    /// The same trial restricted to the candidates in `keep` (in that order).
    /// `keep` must contain the true candidate.
    pub fn restrict(&self, keep: &[usize]) -> Option<Trial> {
        let true_pos = keep.iter().position(|&k| k == self.true_candidate_index)?;
        Some(Trial {
            candidate_authors: keep.iter().map(|&k| self.candidate_authors[k].clone()).collect(),
            example_docs: keep.iter().map(|&k| self.example_docs[k].clone()).collect(),
            true_candidate_index: true_pos,
            query_doc: self.query_doc.clone(),
        })
    }
}

/// Authors eligible under the filter, with the indices of their eligible documents.
struct Pool<'a> {
    corpus: &'a Corpus,
    authors: Vec<(&'a str, Vec<usize>)>,
}

impl<'a> Pool<'a> {
    fn new(corpus: &'a Corpus, filter: Option<&CandidateFilter>) -> Self {
        let authors = corpus
            .authors()
            .filter_map(|a| {
                let docs: Vec<usize> = corpus
                    .author_doc_indices(a)
                    .unwrap_or_default()
                    .iter()
                    .copied()
                    .filter(|&i| filter.is_none_or(|f| f.matches(&corpus.documents()[i])))
                    .collect();
                (!docs.is_empty()).then_some((a, docs))
            })
            .collect();
        Pool { corpus, authors }
    }

    fn build_trial<R: Rng + ?Sized>(&self, config: &BenchConfig, rng: &mut R) -> Result<Trial, BenchError> {
        let k = config.num_candidates;
        if self.authors.len() < k {
            return Err(BenchError::InsufficientAuthors {
                eligible: self.authors.len(),
                required: k,
            });
        }
        let needed = config.shots + 1;
        let mut picked = None;
        for _ in 0..MAX_CANDIDATE_ATTEMPTS {
            let sample = index::sample(rng, self.authors.len(), k).into_vec();
            if sample.iter().all(|&a| self.authors[a].1.len() >= needed) {
                picked = Some(sample);
                break;
            }
        }
        let picked = picked.ok_or(BenchError::AuthorLacksDocuments {
            needed,
            attempts: MAX_CANDIDATE_ATTEMPTS,
        })?;

        let docs = self.corpus.documents();
        let mut example_positions = Vec::with_capacity(k);
        for &a in &picked {
            let owned = &self.authors[a].1;
            example_positions.push(index::sample(rng, owned.len(), config.shots).into_vec());
        }
        let true_candidate_index = rng.gen_range(0..k);
        let owned = &self.authors[picked[true_candidate_index]].1;
        let used = &example_positions[true_candidate_index];
        let remaining: Vec<usize> = (0..owned.len()).filter(|p| !used.contains(p)).collect();
        let query = owned[remaining[rng.gen_range(0..remaining.len())]];

        Ok(Trial {
            candidate_authors: picked.iter().map(|&a| self.authors[a].0.to_string()).collect(),
            example_docs: picked
                .iter()
                .zip(&example_positions)
                .map(|(&a, pos)| pos.iter().map(|&p| docs[self.authors[a].1[p]].clone()).collect())
                .collect(),
            true_candidate_index,
            query_doc: docs[query].clone(),
        })
    }
}

/// Draws one trial from `rng`.
pub fn build_trial<R: Rng + ?Sized>(corpus: &Corpus, config: &BenchConfig, rng: &mut R) -> Result<Trial, BenchError> {
    Pool::new(corpus, config.candidate_filter.as_ref()).build_trial(config, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial_index: usize,
    pub trial_seed: u64,
    pub trial: Trial,
    pub log_evidence: Vec<f64>,
    pub straddle: Vec<bool>,
    /// 1-based rank of the true author.
    pub true_rank: usize,
    pub wall_time_ms: f64,
}

/// Scores the query against every candidate (one backend call each) and ranks
/// the true author.
pub fn run_trial<B: ScoringBackend + ?Sized>(
    trial: &Trial,
    backend: &B,
    template: &PromptTemplate,
    max_example_chars: Option<usize>,
) -> Result<TrialOutcome, BenchError> {
    let start = Instant::now();
    let mut log_evidence = Vec::with_capacity(trial.num_candidates());
    let mut straddle = Vec::with_capacity(trial.num_candidates());
    for (candidate, examples) in trial.example_docs.iter().enumerate() {
        let texts: Vec<&str> = examples.iter().map(|d| d.text.as_str()).collect();
        let prompt = build_prompt(&texts, template, max_example_chars)
            .map_err(|source| BenchError::Prompt { candidate, source })?;
        let scored = backend
            .score_candidate(candidate, prompt.full_prefix(), &trial.query_doc.text)
            .map_err(|source| BenchError::Backend { candidate, source })?;
        log_evidence.push(scored.total_logprob);
        straddle.push(scored.straddle);
    }
    let posterior = posterior_from_log_evidence(&log_evidence, None)?;
    let true_rank = posterior
        .rank_of(trial.true_candidate_index)
        .expect("true candidate index is in range");
    Ok(TrialOutcome {
        trial_index: 0,
        trial_seed: 0,
        trial: trial.clone(),
        log_evidence,
        straddle,
        true_rank,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs `config.num_tests` trials on `jobs` worker threads. Outcomes are in
/// trial order; failures are collected with their trial indices.
pub fn run_benchmark<B: ScoringBackend + ?Sized>(
    corpus: &Corpus,
    config: &BenchConfig,
    backend: &B,
    jobs: usize,
) -> Result<Vec<TrialOutcome>, BenchError> {
    config.validate()?;
    let pool = Pool::new(corpus, config.candidate_filter.as_ref());
    let template = config.template.template();

    let one = |i: usize| -> Result<TrialOutcome, BenchError> {
        let seed = trial_seed(config.seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trial = pool.build_trial(config, &mut rng)?;
        let mut out = run_trial(&trial, backend, &template, config.max_example_chars)?;
        out.trial_index = i;
        out.trial_seed = seed;
        Ok(out)
    };

    let results: Vec<Result<TrialOutcome, BenchError>> = if jobs <= 1 {
        (0..config.num_tests).map(one).collect()
    } else {
        let threads = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| BenchError::InvalidConfig(format!("thread pool: {e}")))?;
        threads.install(|| (0..config.num_tests).into_par_iter().map(one).collect())
    };

    let mut outcomes = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(outcomes)
    } else {
        Err(BenchError::Trials(failures))
    }
}

/// Runs the same benchmark once per candidate count.
pub fn run_sweep<B: ScoringBackend + ?Sized>(
    corpus: &Corpus,
    config: &BenchConfig,
    candidate_counts: &[usize],
    backend: &B,
    jobs: usize,
) -> Result<Vec<(usize, Vec<TrialOutcome>)>, BenchError> {
    if candidate_counts.is_empty() {
        return Err(BenchError::InvalidConfig("no candidate counts to sweep".into()));
    }
    candidate_counts
        .iter()
        .map(|&k| {
            let cfg = BenchConfig {
                num_candidates: k,
                ..config.clone()
            };
            run_benchmark(corpus, &cfg, backend, jobs).map(|o| (k, o))
        })
        .collect()
}

/// One line of the outcome log. Carries enough to recompute every metric,
/// including subgroup breakdowns, without the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub trial_index: usize,
    pub trial_seed: u64,
    pub candidate_authors: Vec<String>,
    pub example_doc_ids: Vec<Vec<String>>,
    pub true_candidate_index: usize,
    pub query_doc_id: String,
    #[serde(default)]
    pub query_meta: BTreeMap<String, String>,
    pub log_evidence: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub straddle: Vec<bool>,
    pub true_rank: usize,
    pub wall_time_ms: f64,
}

impl From<&TrialOutcome> for OutcomeRecord {
    fn from(o: &TrialOutcome) -> Self {
        OutcomeRecord {
            trial_index: o.trial_index,
            trial_seed: o.trial_seed,
            candidate_authors: o.trial.candidate_authors.clone(),
            example_doc_ids: o
                .trial
                .example_docs
                .iter()
                .map(|docs| docs.iter().map(|d| d.doc_id.clone()).collect())
                .collect(),
            true_candidate_index: o.trial.true_candidate_index,
            query_doc_id: o.trial.query_doc.doc_id.clone(),
            query_meta: o.trial.query_doc.meta.clone(),
            log_evidence: o.log_evidence.clone(),
            straddle: if o.straddle.iter().any(|&s| s) {
                o.straddle.clone()
            } else {
                Vec::new()
            },
            true_rank: o.true_rank,
            wall_time_ms: o.wall_time_ms,
        }
    }
}

pub fn write_outcome_log<W: Write>(mut out: W, outcomes: &[TrialOutcome]) -> std::io::Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut out, &OutcomeRecord::from(o))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parses an outcome log; a bad line (including a truncated final line) is
/// reported by its 1-based number.
pub fn read_outcome_log<R: BufRead>(input: R) -> Result<Vec<OutcomeRecord>, BenchError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: OutcomeRecord = serde_json::from_str(&line).map_err(|e| BenchError::Log {
            line: i + 1,
            message: e.to_string(),
        })?;
        let n = rec.candidate_authors.len();
        if rec.true_rank == 0 || rec.true_rank > n || rec.log_evidence.len() != n {
            return Err(BenchError::Log {
                line: i + 1,
                message: format!("inconsistent record: rank {} of {n} candidates", rec.true_rank),
            });
        }
        records.push(rec);
    }
    Ok(records)
}
