//! Top-k accuracy, standard errors, subgroup breakdowns and timing.
//!
//! Accuracies are reported as `Num_correct^k / Num_all` with the binomial
//! standard error `sqrt(p (1 - p) / n)`. Tables render both as percentages
//! with one decimal, e.g. `85.0 ± 3.6`.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{OutcomeRecord, TrialOutcome};

pub const DEFAULT_KS: [usize; 3] = [1, 2, 5];
pub const UNKNOWN_BIN: &str = "unknown";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no outcomes")]
    NoOutcomes,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("sample size must be positive")]
    ZeroSamples,
    #[error("proportion {0} is outside [0, 1]")]
    InvalidProportion(f64),
    #[error("no bins given")]
    NoBins,
    #[error("bins {0:?} and {1:?} overlap")]
    OverlappingBins(String, String),
    #[error("bad bin spec {0:?}")]
    BadBinSpec(String),
}

/// What metrics need to know about one trial.
pub trait RankedOutcome {
    fn true_rank(&self) -> usize;
    fn num_candidates(&self) -> usize;
    fn wall_time_ms(&self) -> f64;
    /// Metadata of the query document.
    fn query_meta(&self, key: &str) -> Option<&str>;
}

impl RankedOutcome for TrialOutcome {
    fn true_rank(&self) -> usize {
        self.true_rank
    }
    fn num_candidates(&self) -> usize {
        self.trial.num_candidates()
    }
    fn wall_time_ms(&self) -> f64 {
        self.wall_time_ms
    }
    fn query_meta(&self, key: &str) -> Option<&str> {
        self.trial.query_doc.meta.get(key).map(String::as_str)
    }
}

impl RankedOutcome for OutcomeRecord {
    fn true_rank(&self) -> usize {
        self.true_rank
    }
    fn num_candidates(&self) -> usize {
        self.candidate_authors.len()
    }
    fn wall_time_ms(&self) -> f64 {
        self.wall_time_ms
    }
    fn query_meta(&self, key: &str) -> Option<&str> {
        self.query_meta.get(key).map(String::as_str)
    }
}

/// Fraction of outcomes whose true author ranks within the top `k`.
pub fn top_k_accuracy<O: RankedOutcome>(outcomes: &[O], k: usize) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::NoOutcomes);
    }
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let hits = outcomes.iter().filter(|o| o.true_rank() <= k).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

pub fn binomial_stderr(p: f64, n: usize) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroSamples);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(MetricsError::InvalidProportion(p));
    }
    Ok((p * (1.0 - p) / n as f64).sqrt())
}

/// Formats a proportion as a percentage with one decimal.
///
/// The value is first rounded half-up to two decimals of a percent and then
/// to one, which is how the published tables were produced (e.g. a standard
/// error of 3.2496% prints as 3.3).
pub fn format_percent(x: f64) -> String {
    let hundredths = (x * 10_000.0 + 0.5).floor() as i64;
    let tenths = (hundredths + 5).div_euclid(10);
    format!("{}.{}", tenths / 10, tenths % 10)
}

/// `"85.0 ± 3.6"` for accuracy 0.85 with standard error 0.0357.
pub fn format_accuracy(accuracy: f64, stderr: f64) -> String {
    format!("{} ± {}", format_percent(accuracy), format_percent(stderr))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub accuracy: f64,
    pub stderr: f64,
}

impl Accuracy {
    pub fn render(&self) -> String {
        format_accuracy(self.accuracy, self.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub top_k: IndexMap<usize, Accuracy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<IndexMap<String, MetricsReport>>,
    pub mean_wall_time_ms: f64,
}

pub fn report<O: RankedOutcome>(outcomes: &[O], ks: &[usize]) -> Result<MetricsReport, MetricsError> {
    let n = outcomes.len();
    let mut top_k = IndexMap::new();
    for &k in ks {
        let accuracy = top_k_accuracy(outcomes, k)?;
        top_k.insert(
            k,
            Accuracy {
                accuracy,
                stderr: binomial_stderr(accuracy, n)?,
            },
        );
    }
    Ok(MetricsReport {
        n,
        top_k,
        groups: None,
        mean_wall_time_ms: timing_summary(outcomes)?.mean_ms,
    })
}

/// A subgroup: either a set of categorical values or an inclusive numeric range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Bin {
    Category { label: String, values: Vec<String> },
    Range { label: String, lo: f64, hi: f64 },
}

impl Bin {
    pub fn category(label: &str, values: &[&str]) -> Self {
        Bin::Category {
            label: label.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn range(lo: f64, hi: f64) -> Self {
        Bin::Range {
            label: format!("[{lo} - {hi}]"),
            lo,
            hi,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Bin::Category { label, .. } | Bin::Range { label, .. } => label,
        }
    }

    pub fn contains(&self, value: &str) -> bool {
        let value = value.trim();
        match self {
            Bin::Category { values, .. } => values.iter().any(|v| v.eq_ignore_ascii_case(value)),
            Bin::Range { lo, hi, .. } => value.parse::<f64>().is_ok_and(|x| *lo <= x && x <= *hi),
        }
    }

    /// Parses `"13-17"` as a range and anything else as a single category.
    pub fn parse(spec: &str) -> Result<Self, MetricsError> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Err(MetricsError::BadBinSpec(spec.to_string()));
        }
        if let Some((lo, hi)) = spec.split_once('-') {
            if let (Ok(lo), Ok(hi)) = (lo.trim().parse::<f64>(), hi.trim().parse::<f64>()) {
                if lo > hi {
                    return Err(MetricsError::BadBinSpec(spec.to_string()));
                }
                return Ok(Bin::range(lo, hi));
            }
        }
        Ok(Bin::category(spec, &[spec]))
    }
}

/// Default bins for the metadata keys of the two benchmark datasets:
/// gender (blogs), age in years (blogs) and rating out of 10 (movie reviews).
pub fn default_bins(key: &str) -> Option<Vec<Bin>> {
    match key {
        "gender" => Some(vec![Bin::category("Male", &["male", "m"]), Bin::category("Female", &["female", "f"])]),
        "age" => Some(vec![Bin::range(13.0, 17.0), Bin::range(18.0, 34.0), Bin::range(35.0, 44.0), Bin::range(45.0, 48.0)]),
        "rating" => Some(
            [(1.0, 2.0), (3.0, 4.0), (5.0, 6.0), (7.0, 8.0), (9.0, 10.0)]
                .into_iter()
                .map(|(lo, hi)| Bin::range(lo, hi))
                .collect(),
        ),
        _ => None,
    }
}

fn check_bins(bins: &[Bin]) -> Result<(), MetricsError> {
    if bins.is_empty() {
        return Err(MetricsError::NoBins);
    }
    for (i, a) in bins.iter().enumerate() {
        for b in &bins[i + 1..] {
            let overlap = match (a, b) {
                (Bin::Range { lo: l1, hi: h1, .. }, Bin::Range { lo: l2, hi: h2, .. }) => l1 <= h2 && l2 <= h1,
                (Bin::Category { values, .. }, other) | (other, Bin::Category { values, .. }) => {
                    values.iter().any(|v| other.contains(v))
                }
            };
            if overlap {
                return Err(MetricsError::OverlappingBins(a.label().to_string(), b.label().to_string()));
            }
        }
    }
    Ok(())
}

/// Overall report plus one sub-report per bin of the query document's
/// `group_key` metadata. Outcomes without a matching bin go to `"unknown"`.
/// With `bins = None` every distinct value gets its own group (or the key's
/// [`default_bins`] when it has some). Empty groups are omitted.
pub fn group_report<O: RankedOutcome>(
    outcomes: &[O],
    group_key: &str,
    bins: Option<&[Bin]>,
    ks: &[usize],
) -> Result<MetricsReport, MetricsError> {
    let mut overall = report(outcomes, ks)?;
    let defaults;
    let bins = match bins {
        Some(b) => Some(b),
        None => {
            defaults = default_bins(group_key);
            defaults.as_deref()
        }
    };

    let mut members: IndexMap<String, Vec<&O>> = IndexMap::new();
    match bins {
        Some(bins) => {
            check_bins(bins)?;
            for b in bins {
                members.insert(b.label().to_string(), Vec::new());
            }
            for o in outcomes {
                let label = o
                    .query_meta(group_key)
                    .and_then(|v| bins.iter().find(|b| b.contains(v)))
                    .map_or(UNKNOWN_BIN, Bin::label);
                members.entry(label.to_string()).or_default().push(o);
            }
        }
        None => {
            for o in outcomes {
                let label = o.query_meta(group_key).map_or(UNKNOWN_BIN, str::trim);
                members.entry(label.to_string()).or_default().push(o);
            }
            members.sort_keys();
        }
    }

    let mut groups = IndexMap::new();
    for (label, group) in members {
        if group.is_empty() {
            continue;
        }
        let owned: Vec<&O> = group;
        groups.insert(label, report(&owned, ks)?);
    }
    overall.groups = Some(groups);
    Ok(overall)
}

impl<O: RankedOutcome> RankedOutcome for &O {
    fn true_rank(&self) -> usize {
        (**self).true_rank()
    }
    fn num_candidates(&self) -> usize {
        (**self).num_candidates()
    }
    fn wall_time_ms(&self) -> f64 {
        (**self).wall_time_ms()
    }
    fn query_meta(&self, key: &str) -> Option<&str> {
        (**self).query_meta(key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub total_ms: f64,
    pub mean_ms: f64,
    pub per_trial_ms: Vec<f64>,
}

pub fn timing_summary<O: RankedOutcome>(outcomes: &[O]) -> Result<TimingSummary, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::NoOutcomes);
    }
    let per_trial_ms: Vec<f64> = outcomes.iter().map(RankedOutcome::wall_time_ms).collect();
    let total_ms: f64 = per_trial_ms.iter().sum();
    Ok(TimingSummary {
        total_ms,
        mean_ms: total_ms / per_trial_ms.len() as f64,
        per_trial_ms,
    })
}

impl MetricsReport {
    /// Aligned plain-text table, one row for the whole set and one per group.
    pub fn to_table(&self) -> String {
        let ks: Vec<usize> = self.top_k.keys().copied().collect();
        let mut rows: Vec<(String, &MetricsReport)> = vec![("all".to_string(), self)];
        if let Some(groups) = &self.groups {
            rows.extend(groups.iter().map(|(l, r)| (l.clone(), r)));
        }
        let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(5);
        let cell_w = 13;

        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}  {:>6}", "group", "n");
        for k in &ks {
            let _ = write!(out, "  {:>cell_w$}", format!("Top {k} Acc."));
        }
        let _ = writeln!(out, "  {:>12}", "mean ms");
        for (label, r) in rows {
            let _ = write!(out, "{:<label_w$}  {:>6}", label, r.n);
            for k in &ks {
                let cell = r.top_k.get(k).map_or_else(|| "-".to_string(), Accuracy::render);
                let _ = write!(out, "  {:>cell_w$}", cell);
            }
            let _ = writeln!(out, "  {:>12.1}", r.mean_wall_time_ms);
        }
        out
    }

    /// Same report with timing zeroed, for comparisons that ignore timing.
    pub fn without_timing(&self) -> MetricsReport {
        MetricsReport {
            mean_wall_time_ms: 0.0,
            groups: self
                .groups
                .as_ref()
                .map(|g| g.iter().map(|(l, r)| (l.clone(), r.without_timing())).collect()),
            ..self.clone()
        }
    }
}

/// CSV rows `num_candidates,top1,top2,top5` for a candidate-count sweep.
pub fn sweep_csv(rows: &[(usize, MetricsReport)]) -> String {
    let mut out = String::from("num_candidates,top1,top2,top5\n");
    for (k, r) in rows {
        let acc = |k: usize| r.top_k.get(&k).map_or(String::new(), |a| a.accuracy.to_string());
        let _ = writeln!(out, "{k},{},{},{}", acc(1), acc(2), acc(5));
    }
    out
}
