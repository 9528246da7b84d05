//! Posterior over candidate authors from per-candidate log-evidence.
//!
//! `log P(a_i | u) = log P(u | t(a_i)) + log P(a_i) - logsumexp_j(...)`

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("no candidates to rank")]
    NoCandidates,
    #[error("{priors} priors given for {candidates} candidates")]
    PriorLengthMismatch { candidates: usize, priors: usize },
    #[error("prior for candidate {index} must be positive and finite, got {value}")]
    InvalidPrior { index: usize, value: f64 },
    #[error("log-evidence for candidate {index} is not finite: {value}")]
    NonFiniteEvidence { index: usize, value: f64 },
    #[error("candidate index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate_index: usize,
    pub author_id: String,
    /// `ln P(u | t(a_i))`
    pub log_evidence: f64,
    #[serde(default)]
    pub straddle_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    /// Normalized log priors.
    pub log_prior: Vec<f64>,
    pub log_posterior: Vec<f64>,
    /// Candidate indices, most probable first.
    pub ranking: Vec<usize>,
}

/// `ln Σ exp(x_i)`, computed by subtracting the maximum first.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Posterior over candidates. `priors` need not sum to one; `None` means uniform.
pub fn posterior(scores: &[CandidateScore], priors: Option<&[f64]>) -> Result<Posterior, BayesError> {
    let evidence: Vec<f64> = scores.iter().map(|s| s.log_evidence).collect();
    posterior_from_log_evidence(&evidence, priors)
}

pub fn posterior_from_log_evidence(evidence: &[f64], priors: Option<&[f64]>) -> Result<Posterior, BayesError> {
    let n = evidence.len();
    if n == 0 {
        return Err(BayesError::NoCandidates);
    }
    if let Some((index, &value)) = evidence.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(BayesError::NonFiniteEvidence { index, value });
    }
    let log_prior = match priors {
        None => vec![-(n as f64).ln(); n],
        Some(p) => {
            if p.len() != n {
                return Err(BayesError::PriorLengthMismatch {
                    candidates: n,
                    priors: p.len(),
                });
            }
            if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                return Err(BayesError::InvalidPrior { index, value });
            }
            let logs: Vec<f64> = p.iter().map(|v| v.ln()).collect();
            let norm = log_sum_exp(&logs);
            logs.into_iter().map(|v| v - norm).collect()
        }
    };

    let joint: Vec<f64> = evidence.iter().zip(&log_prior).map(|(e, p)| e + p).collect();
    let norm = log_sum_exp(&joint);
    let log_posterior: Vec<f64> = joint.iter().map(|j| j - norm).collect();

    let mut ranking: Vec<usize> = (0..n).collect();
    // stable sort keeps ties in ascending index order
    ranking.sort_by(|&a, &b| log_posterior[b].total_cmp(&log_posterior[a]));

    Ok(Posterior {
        log_prior,
        log_posterior,
        ranking,
    })
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_posterior.iter().map(|lp| lp.exp()).collect()
    }

    /// 1-based position of `candidate_index` in the ranking.
    pub fn rank_of(&self, candidate_index: usize) -> Result<usize, BayesError> {
        self.ranking
            .iter()
            .position(|&c| c == candidate_index)
            .map(|p| p + 1)
            .ok_or(BayesError::IndexOutOfRange {
                index: candidate_index,
                len: self.ranking.len(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn post(e: &[f64]) -> Posterior {
        posterior_from_log_evidence(e, None).unwrap()
    }

    #[test]
    fn two_candidate_example() {
        let p = post(&[-958.41, -964.51]);
        assert_eq!(p.ranking, vec![0, 1]);
        // 1 / (1 + e^-6.10) at 40 digits: 0.99776215147872366725...
        assert!((p.probabilities()[0] - 0.997_762_151_478_723_7).abs() < 1e-12);
    }

    #[test]
    fn equal_evidence_is_uniform_and_ranked_by_index() {
        let p = post(&[-5.0, -5.0, -5.0]);
        for q in p.probabilities() {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(p.ranking, vec![0, 1, 2]);
    }

    #[test]
    fn explicit_priors() {
        let p = posterior_from_log_evidence(&[-10.0, -12.0], Some(&[0.9, 0.1])).unwrap();
        let expected = 1.0 / (1.0 + (-(2.0 + 9f64.ln())).exp());
        assert!((p.probabilities()[0] - expected).abs() < 1e-12);
        // 40-digit evaluation: 0.98518551546926212616...
        assert!((p.probabilities()[0] - 0.985_185_515_469_262_1).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        assert_eq!(posterior_from_log_evidence(&[], None), Err(BayesError::NoCandidates));
        assert!(matches!(
            posterior_from_log_evidence(&[1.0, 2.0], Some(&[1.0])),
            Err(BayesError::PriorLengthMismatch { .. })
        ));
        assert!(matches!(
            posterior_from_log_evidence(&[1.0, 2.0], Some(&[1.0, 0.0])),
            Err(BayesError::InvalidPrior { index: 1, .. })
        ));
        assert!(matches!(
            posterior_from_log_evidence(&[f64::NEG_INFINITY], None),
            Err(BayesError::NonFiniteEvidence { index: 0, .. })
        ));
    }

    #[test]
    fn rank_lookup() {
        let p = Posterior {
            log_prior: vec![0.0; 3],
            log_posterior: vec![0.0; 3],
            ranking: vec![2, 0, 1],
        };
        assert_eq!(p.rank_of(0), Ok(2));
        assert!(matches!(p.rank_of(5), Err(BayesError::IndexOutOfRange { index: 5, len: 3 })));
        assert_eq!(post(&[-1.0]).rank_of(0), Ok(1));
    }

    #[test]
    fn scores_api() {
        let scores = vec![
            CandidateScore { candidate_index: 0, author_id: "a".into(), log_evidence: -3.0, straddle_flag: false },
            CandidateScore { candidate_index: 1, author_id: "b".into(), log_evidence: -1.0, straddle_flag: false },
        ];
        assert_eq!(posterior(&scores, None).unwrap().ranking, vec![1, 0]);
    }

    proptest! {
        #[test]
        fn removing_a_lower_ranked_candidate_never_hurts(e in proptest::collection::vec(-50.0f64..0.0, 2..8), j in 0usize..8, drop in 0usize..8) {
            let n = e.len();
            let (j, drop) = (j % n, drop % n);
            prop_assume!(j != drop);
            let full = post(&e);
            let rank_j = full.rank_of(j).unwrap();
            let rank_drop = full.rank_of(drop).unwrap();
            let kept: Vec<usize> = (0..n).filter(|&i| i != drop).collect();
            let sub = post(&kept.iter().map(|&i| e[i]).collect::<Vec<_>>());
            let new_j = sub.rank_of(kept.iter().position(|&i| i == j).unwrap()).unwrap();
            if rank_drop > rank_j {
                prop_assert_eq!(new_j, rank_j);
            } else {
                prop_assert_eq!(new_j, rank_j - 1);
            }
        }
    }
}
