//! Mapping a top-logprob list onto the candidate token set.

use std::collections::BTreeMap;

use divrr::config::MissingCandidatePolicy;
use divrr::relevance::{ScoringConfig, TokenEvidence};

use crate::protocol::TopLogprob;
use crate::RemoteError;

/// Offset below the smallest observed logprob used by the floor policy.
pub const FLOOR_OFFSET: f64 = 5.0;

/// Trim and case-fold.
pub fn normalize_token(token: &str) -> String {
    token.trim().to_lowercase()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Restricts `top` to the configured candidates. Spellings that normalize
/// to the same candidate are merged by log-sum-exp, so `"Yes"`, `" yes"`
/// and `"YES"` pool their probability mass.
pub fn evidence_from_top_logprobs(
    top: &[TopLogprob],
    scoring: &ScoringConfig,
    normalize: bool,
    policy: MissingCandidatePolicy,
) -> Result<TokenEvidence, RemoteError> {
    if top.is_empty() {
        return Err(RemoteError::MalformedResponse("top_logprobs list is empty".into()));
    }
    if let Some(bad) = top.iter().find(|t| t.logprob.is_nan() || t.logprob > 0.0) {
        return Err(RemoteError::MalformedResponse(format!(
            "logprob {} for {:?} is not a log-probability",
            bad.logprob, bad.token
        )));
    }
    let key = |s: &str| if normalize { normalize_token(s) } else { s.to_string() };

    let mut entries = BTreeMap::new();
    let mut missing = Vec::new();
    for cand in &scoring.candidate_tokens {
        let k = key(cand);
        let hits: Vec<f64> = top
            .iter()
            .filter(|t| key(&t.token) == k)
            .map(|t| t.logprob)
            .collect();
        if hits.is_empty() {
            missing.push(cand.clone());
        } else {
            entries.insert(cand.clone(), log_sum_exp(&hits));
        }
    }

    if !missing.is_empty() {
        match policy {
            MissingCandidatePolicy::Error => return Err(RemoteError::MissingCandidates(missing)),
            MissingCandidatePolicy::Floor => {
                let floor = top.iter().map(|t| t.logprob).fold(f64::INFINITY, f64::min) - FLOOR_OFFSET;
                for cand in missing {
                    entries.insert(cand, floor);
                }
            }
        }
    }
    Ok(TokenEvidence::with_config(entries, scoring)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use divrr::relevance::relevance_score;

    fn top(items: &[(&str, f64)]) -> Vec<TopLogprob> {
        items
            .iter()
            .map(|(t, l)| TopLogprob {
                token: t.to_string(),
                logprob: *l,
            })
            .collect()
    }

    #[test]
    fn normalization_table() {
        for (raw, want) in [
            ("Yes", "yes"),
            ("yes", "yes"),
            (" Yes", "yes"),
            ("YES\n", "yes"),
            ("\tNo ", "no"),
            ("Ye", "ye"),
        ] {
            assert_eq!(normalize_token(raw), want, "{raw:?}");
        }
    }

    #[test]
    fn variants_merge_by_log_sum_exp() {
        let lp = top(&[("Yes", (0.3f64).ln()), (" yes", (0.2f64).ln()), ("No", (0.1f64).ln())]);
        let ev = evidence_from_top_logprobs(&lp, &ScoringConfig::default(), true, MissingCandidatePolicy::Error)
            .unwrap();
        assert!((ev.entries()["Yes"] - (0.5f64).ln()).abs() < 1e-12);
        let s = relevance_score(&ev, &ScoringConfig::default()).unwrap();
        assert!((s - 0.5 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn exact_matching_when_normalization_off() {
        let lp = top(&[(" Yes", -0.1), ("No", -2.0)]);
        let err = evidence_from_top_logprobs(&lp, &ScoringConfig::default(), false, MissingCandidatePolicy::Error)
            .unwrap_err();
        assert!(matches!(err, RemoteError::MissingCandidates(ref m) if m == &["Yes".to_string()]));
    }

    #[test]
    fn floor_policy_imputes_below_minimum() {
        let lp = top(&[("Yes", -0.05), ("Maybe", -3.0)]);
        let ev = evidence_from_top_logprobs(&lp, &ScoringConfig::default(), true, MissingCandidatePolicy::Floor)
            .unwrap();
        assert_eq!(ev.entries()["No"], -8.0);
        assert_eq!(ev.entries()["Yes"], -0.05);
    }

    #[test]
    fn empty_or_invalid_lists_are_malformed() {
        let cfg = ScoringConfig::default();
        assert!(matches!(
            evidence_from_top_logprobs(&[], &cfg, true, MissingCandidatePolicy::Floor),
            Err(RemoteError::MalformedResponse(_))
        ));
        let lp = top(&[("Yes", 0.5), ("No", -1.0)]);
        assert!(matches!(
            evidence_from_top_logprobs(&lp, &cfg, true, MissingCandidatePolicy::Error),
            Err(RemoteError::MalformedResponse(_))
        ));
    }
}
