use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{check_request, BackendError, ScoredContinuation, ScoringBackend};

#[derive(Debug, Clone)]
enum Table {
    ByPair(HashMap<(String, String), f64>),
    ByCandidate(BTreeMap<usize, f64>),
}

/// Fixed-table backend for replaying recorded scores. Lookups are exact; a
/// missing key is an error, never a default.
#[derive(Debug, Clone)]
pub struct MockBackend {
    table: Table,
}

impl MockBackend {
    /// Table keyed by `(prompt, continuation)`.
    pub fn by_pair<I, P, C>(entries: I) -> Self
    where
        I: IntoIterator<Item = ((P, C), f64)>,
        P: Into<String>,
        C: Into<String>,
    {
        MockBackend {
            table: Table::ByPair(entries.into_iter().map(|((p, c), v)| ((p.into(), c.into()), v)).collect()),
        }
    }

    /// Table keyed by candidate index.
    pub fn by_candidate(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        MockBackend {
            table: Table::ByCandidate(entries.into_iter().collect()),
        }
    }

    /// Parses a JSON object mapping `"<candidate_index>"` to a total logprob.
    pub fn from_json(json: &str) -> Result<Self, BackendError> {
        let raw: BTreeMap<String, f64> =
            serde_json::from_str(json).map_err(|e| BackendError::Config(format!("mock table: {e}")))?;
        let mut entries = BTreeMap::new();
        for (k, v) in raw {
            let idx: usize = k
                .parse()
                .map_err(|_| BackendError::Config(format!("mock table key {k:?} is not a candidate index")))?;
            if !v.is_finite() {
                return Err(BackendError::Config(format!("mock table value for {k} is not finite")));
            }
            entries.insert(idx, v);
        }
        Ok(Self::by_candidate(entries))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read mock table {}: {e}", path.display())))?;
        Self::from_json(&json)
    }
}

impl ScoringBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn score(&self, prompt: &str, continuation: &str) -> Result<ScoredContinuation, BackendError> {
        check_request(None, prompt, continuation)?;
        match &self.table {
            Table::ByPair(t) => t
                .get(&(prompt.to_string(), continuation.to_string()))
                .map(|&v| ScoredContinuation::from_total(v))
                .ok_or_else(|| BackendError::MissingMockEntry(format!("prompt {prompt:?}, continuation {continuation:?}"))),
            Table::ByCandidate(_) => Err(BackendError::MissingMockEntry(
                "a candidate index (table is keyed by candidate)".into(),
            )),
        }
    }

    fn score_candidate(
        &self,
        candidate_index: usize,
        prompt: &str,
        continuation: &str,
    ) -> Result<ScoredContinuation, BackendError> {
        match &self.table {
            Table::ByPair(_) => self.score(prompt, continuation),
            Table::ByCandidate(t) => {
                check_request(None, prompt, continuation)?;
                t.get(&candidate_index)
                    .map(|&v| ScoredContinuation::from_total(v))
                    .ok_or_else(|| BackendError::MissingMockEntry(format!("candidate {candidate_index}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_lookup() {
        let b = MockBackend::by_pair([(("P", "u1"), -958.41)]);
        assert_eq!(b.score("P", "u1").unwrap().total_logprob, -958.41);
        assert!(matches!(b.score("P", "u2"), Err(BackendError::MissingMockEntry(_))));
        assert!(matches!(b.score("P", ""), Err(BackendError::EmptyContinuation)));
    }

    #[test]
    fn candidate_table_from_json() {
        let b = MockBackend::from_json(r#"{"0": -958.41, "1": -964.51}"#).unwrap();
        assert_eq!(b.score_candidate(1, "any", "q").unwrap().total_logprob, -964.51);
        assert!(matches!(b.score_candidate(2, "any", "q"), Err(BackendError::MissingMockEntry(_))));
        assert!(MockBackend::from_json(r#"{"x": 1.0}"#).is_err());
        assert!(MockBackend::from_json(r#"[1.0]"#).is_err());
    }
}
