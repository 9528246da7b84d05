//! `attrib` command-line interface.
//!
//! Exit codes: 0 on success, 2 on configuration or input errors, 3 when the
//! scoring backend fails.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::backend::{BackendError, MockBackend, NgramBackend, RemoteBackend, ScoringBackend};
use crate::bayes::posterior_from_log_evidence;
use crate::bench::{self, BenchConfig, BenchError, CandidateFilter, OutcomeRecord};
use crate::corpus::{load_corpus, Corpus};
use crate::metrics::{self, Bin, MetricsReport, DEFAULT_KS};
use crate::ngram::{NgramModel, DEFAULT_ALPHA};
use crate::prompting::{build_prompt, template_catalog, TemplateId};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("backend failure: {0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        if e.is_backend_failure() {
            CliError::Backend(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "attrib", version, about = "Authorship attribution by conditional log-probability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank candidate authors for one query text
    Attribute(AttributeArgs),
    /// Run the randomized benchmark and write an outcome log
    Bench(BenchArgs),
    /// Recompute metrics from an outcome log
    Report(ReportArgs),
    /// Run the benchmark for several candidate counts
    Sweep(SweepArgs),
    /// List the prompt templates
    Templates(TemplatesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Ngram,
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum OutputFormat {
    Json,
    #[default]
    Table,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "ngram")]
    pub backend: BackendKind,
    /// Base URL of a completions server (remote backend)
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Served model name (remote backend)
    #[arg(long)]
    pub model: Option<String>,
    /// n-gram order (ngram backend)
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Additive smoothing mass (ngram backend)
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Background text the n-gram base model is trained on before prompts are ingested
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// JSON table of candidate index -> total logprob (mock backend)
    #[arg(long)]
    pub mock_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PromptArgs {
    #[arg(long, default_value = "p1", value_parser = parse_template)]
    pub template: TemplateId,
    /// Keep only the first N characters of each example text
    #[arg(long)]
    pub max_example_chars: Option<usize>,
}

fn parse_template(s: &str) -> Result<TemplateId, String> {
    s.parse().map_err(|e: crate::prompting::PromptError| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct GroupArgs {
    /// Break metrics down by this metadata key of the query document
    #[arg(long)]
    pub group_by: Option<String>,
    /// Comma-separated bins for --group-by, e.g. "13-17,18-34" or "male,female"
    #[arg(long, value_delimiter = ',')]
    pub bins: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Query text, or a path to a file holding it
    #[arg(long)]
    pub query: String,
    /// Comma-separated author ids, or "all"
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub candidates: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub shots: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub min_doc_chars: usize,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub shots: usize,
    #[arg(long, default_value_t = 100)]
    pub tests: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 1)]
    pub min_doc_chars: usize,
    /// Restrict candidates to documents with KEY in VALUES, e.g. gender=female
    #[arg(long, value_parser = parse_filter)]
    pub filter: Option<CandidateFilter>,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

fn parse_filter(s: &str) -> Result<CandidateFilter, String> {
    let (key, values) = s.split_once('=').ok_or("expected KEY=VALUE[,VALUE...]")?;
    let allowed: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if key.trim().is_empty() || allowed.is_empty() {
        return Err("expected KEY=VALUE[,VALUE...]".into());
    }
    Ok(CandidateFilter {
        key: key.trim().to_string(),
        allowed,
    })
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 10)]
    pub candidates: usize,
    /// Outcome log (JSONL) to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub group: GroupArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Candidate counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "5,10,25,50")]
    pub candidates: Vec<usize>,
    /// CSV of num_candidates,top1,top2,top5
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Outcome log written by `attrib bench`
    pub log: PathBuf,
    #[command(flatten)]
    pub group: GroupArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TemplatesArgs {
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Attribute(a) => cmd_attribute(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Templates(a) => cmd_templates(&a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(config_err)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

pub fn make_backend(args: &BackendArgs) -> Result<Box<dyn ScoringBackend>, CliError> {
    let backend: Box<dyn ScoringBackend> = match args.backend {
        BackendKind::Ngram => {
            let mut base = NgramModel::empty(args.order, args.alpha).map_err(config_err)?;
            if let Some(path) = &args.background {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                base = base.ingest(&text);
            }
            Box::new(NgramBackend::new(base, true))
        }
        BackendKind::Remote => {
            let endpoint = args
                .endpoint
                .as_deref()
                .ok_or_else(|| config_err("--endpoint is required with --backend remote"))?;
            let model = args
                .model
                .as_deref()
                .ok_or_else(|| config_err("--model is required with --backend remote"))?;
            Box::new(RemoteBackend::http(endpoint, model).map_err(config_err)?)
        }
        BackendKind::Mock => {
            let path = args
                .mock_table
                .as_ref()
                .ok_or_else(|| config_err("--mock-table is required with --backend mock"))?;
            Box::new(MockBackend::from_file(path).map_err(config_err)?)
        }
    };
    Ok(backend)
}

fn load(path: &Path, min_doc_chars: usize) -> Result<Corpus, CliError> {
    let loaded = load_corpus(path, min_doc_chars).map_err(config_err)?;
    if loaded.skipped > 0 {
        eprintln!("skipped {} documents shorter than {min_doc_chars} characters", loaded.skipped);
    }
    Ok(loaded.corpus)
}

#[derive(Debug, Serialize)]
struct RankedCandidate {
    rank: usize,
    candidate_index: usize,
    author_id: String,
    log_evidence: f64,
    posterior: f64,
    straddle: bool,
}

pub fn cmd_attribute(args: &AttributeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load(&args.corpus, args.min_doc_chars)?;
    let query = match std::fs::read_to_string(&args.query) {
        Ok(text) => text,
        Err(_) => args.query.clone(),
    };
    if query.is_empty() {
        return Err(config_err("query text is empty"));
    }
    if args.shots == 0 {
        return Err(config_err("--shots must be at least 1"));
    }
    let candidates: Vec<String> = if args.candidates.len() == 1 && args.candidates[0] == "all" {
        corpus.authors().map(str::to_string).collect()
    } else {
        args.candidates.clone()
    };
    if candidates.is_empty() {
        return Err(config_err("no candidates"));
    }
    let backend = make_backend(&args.backend)?;
    let template = args.prompt.template.template();
    let mut rng = bench::trial_rng(resolve_seed(args.seed), 0);

    let mut evidence = Vec::with_capacity(candidates.len());
    let mut straddle = Vec::with_capacity(candidates.len());
    for (i, author) in candidates.iter().enumerate() {
        let examples = corpus
            .sample_author_documents(author, args.shots, &mut rng)
            .map_err(config_err)?;
        let texts: Vec<&str> = examples.iter().map(|d| d.text.as_str()).collect();
        let prompt = build_prompt(&texts, &template, args.prompt.max_example_chars).map_err(config_err)?;
        let scored = backend
            .score_candidate(i, prompt.full_prefix(), &query)
            .map_err(|e| backend_error(i, e))?;
        evidence.push(scored.total_logprob);
        straddle.push(scored.straddle);
    }
    let post = posterior_from_log_evidence(&evidence, None).map_err(|e| CliError::Backend(e.to_string()))?;
    let probs = post.probabilities();
    let ranked: Vec<RankedCandidate> = post
        .ranking
        .iter()
        .enumerate()
        .map(|(pos, &i)| RankedCandidate {
            rank: pos + 1,
            candidate_index: i,
            author_id: candidates[i].clone(),
            log_evidence: evidence[i],
            posterior: probs[i],
            straddle: straddle[i],
        })
        .collect();

    let text = match args.format {
        OutputFormat::Json => format!("{}\n", serde_json::to_string_pretty(&ranked).map_err(config_err)?),
        OutputFormat::Table => {
            let w = ranked.iter().map(|r| r.author_id.chars().count()).max().unwrap_or(0);
            ranked
                .iter()
                .map(|r| {
                    format!(
                        "{:>3}  {:<w$}  {:>14.4}  {:.6}{}\n",
                        r.rank,
                        r.author_id,
                        r.log_evidence,
                        r.posterior,
                        if r.straddle { "  (boundary token dropped)" } else { "" }
                    )
                })
                .collect()
        }
    };
    write_out(out, &text)
}

fn backend_error(candidate: usize, e: BackendError) -> CliError {
    match e {
        BackendError::Config(_) | BackendError::PromptOverflow { .. } | BackendError::EmptyContinuation => {
            CliError::Config(format!("candidate {candidate}: {e}"))
        }
        other => CliError::Backend(format!("candidate {candidate}: {other}")),
    }
}

fn bench_config(run: &RunArgs, candidates: usize) -> BenchConfig {
    BenchConfig {
        num_candidates: candidates,
        shots: run.shots,
        num_tests: run.tests,
        seed: resolve_seed(run.seed),
        template: run.prompt.template,
        candidate_filter: run.filter.clone(),
        max_example_chars: run.prompt.max_example_chars,
    }
}

fn parse_bins(specs: &Option<Vec<String>>) -> Result<Option<Vec<Bin>>, CliError> {
    specs
        .as_ref()
        .map(|v| v.iter().map(|s| Bin::parse(s)).collect::<Result<Vec<_>, _>>())
        .transpose()
        .map_err(config_err)
}

/// Metrics for a set of log records, grouped when asked to.
pub fn records_report(records: &[OutcomeRecord], group: &GroupArgs) -> Result<MetricsReport, CliError> {
    match &group.group_by {
        Some(key) => {
            let bins = parse_bins(&group.bins)?;
            metrics::group_report(records, key, bins.as_deref(), &DEFAULT_KS).map_err(config_err)
        }
        None => metrics::report(records, &DEFAULT_KS).map_err(config_err),
    }
}

fn render_report(report: &MetricsReport, format: OutputFormat) -> Result<String, CliError> {
    Ok(match format {
        OutputFormat::Json => format!("{}\n", serde_json::to_string_pretty(report).map_err(config_err)?),
        OutputFormat::Table => report.to_table(),
    })
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = bench_config(&args.run, args.candidates);
    config.validate().map_err(config_err)?;
    let corpus = load(&args.run.corpus, args.run.min_doc_chars)?;
    let backend = make_backend(&args.run.backend)?;
    let outcomes = bench::run_benchmark(&corpus, &config, &backend, args.run.jobs)?;

    let file = File::create(&args.out).map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;
    bench::write_outcome_log(BufWriter::new(file), &outcomes).map_err(config_err)?;

    let records: Vec<OutcomeRecord> = outcomes.iter().map(OutcomeRecord::from).collect();
    let report = records_report(&records, &args.group)?;
    write_out(out, &render_report(&report, args.group.format)?)
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = File::open(&args.log).map_err(|e| CliError::Config(format!("{}: {e}", args.log.display())))?;
    let records = bench::read_outcome_log(BufReader::new(file)).map_err(config_err)?;
    let report = records_report(&records, &args.group)?;
    write_out(out, &render_report(&report, args.group.format)?)
}

#[derive(Debug, Serialize)]
struct SweepRow<'a> {
    num_candidates: usize,
    report: &'a MetricsReport,
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.candidates.is_empty() {
        return Err(config_err("--candidates needs at least one count"));
    }
    let config = bench_config(&args.run, args.candidates[0]);
    for &k in &args.candidates {
        BenchConfig { num_candidates: k, ..config.clone() }.validate().map_err(config_err)?;
    }
    let corpus = load(&args.run.corpus, args.run.min_doc_chars)?;
    let backend = make_backend(&args.run.backend)?;
    let runs = bench::run_sweep(&corpus, &config, &args.candidates, &backend, args.run.jobs)?;

    let mut rows = Vec::with_capacity(runs.len());
    for (k, outcomes) in &runs {
        rows.push((*k, metrics::report(outcomes, &DEFAULT_KS).map_err(config_err)?));
    }
    if let Some(path) = &args.out {
        std::fs::write(path, metrics::sweep_csv(&rows))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    let text = match args.format {
        OutputFormat::Json => {
            let json: Vec<SweepRow> = rows.iter().map(|(k, r)| SweepRow { num_candidates: *k, report: r }).collect();
            format!("{}\n", serde_json::to_string_pretty(&json).map_err(config_err)?)
        }
        OutputFormat::Table => {
            let mut s = format!("{:>10}  {:>13}  {:>13}  {:>13}\n", "candidates", "Top 1 Acc.", "Top 2 Acc.", "Top 5 Acc.");
            for (k, r) in &rows {
                let cell = |k: usize| r.top_k.get(&k).map_or("-".to_string(), |a| a.render());
                s.push_str(&format!("{:>10}  {:>13}  {:>13}  {:>13}\n", k, cell(1), cell(2), cell(5)));
            }
            s
        }
    };
    write_out(out, &text)
}

pub fn cmd_templates(args: &TemplatesArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let catalog = template_catalog();
    let text = match args.format {
        OutputFormat::Json => format!("{}\n", serde_json::to_string_pretty(&catalog).map_err(config_err)?),
        OutputFormat::Table => catalog
            .iter()
            .map(|t| format!("{:<5} {}\n", t.id.as_str(), t.connective.replace('\n', "\\n")))
            .collect(),
    };
    write_out(out, &text)
}
