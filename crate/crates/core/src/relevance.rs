//! Question-conditioned relevance scoring.
//!
//! The relevance of an observation is the softmax mass that a language head
//! places on affirmative tokens, restricted to a small polar candidate set:
//!
//! ```text
//! s = sum_{w in affirmative} exp(E(w)/tau) / sum_{w in candidates} exp(E(w)/tau)
//! ```
//!
//! [`relevance_score`] evaluates this from token logits. Providers
//! ([`RelevanceProvider`]) turn an observation and a question into a
//! [`RelevanceResult`]; the [`SyntheticProvider`] here stands in for a vision
//! language model inside the grid simulator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, DEFAULT_TEMPERATURE};
use crate::rng::keyed_unit;
use crate::world::{evidence_fraction, Observation, Question};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelevanceError {
    #[error("candidate token {0:?} has no logit")]
    MissingLogit(String),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("logit for {0:?} is not finite")]
    NonFiniteLogit(String),
    #[error("invalid token evidence: {0}")]
    InvalidEvidence(String),
}

/// Temperature and polar token sets used to read a relevance score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringConfig {
    pub temperature: f64,
    pub candidate_tokens: Vec<String>,
    pub affirmative_tokens: Vec<String>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            temperature: DEFAULT_TEMPERATURE,
            candidate_tokens: vec!["Yes".into(), "No".into()],
            affirmative_tokens: vec!["Yes".into()],
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError::invalid("scoring.temperature", "must be > 0"));
        }
        check_token_sets(&self.candidate_tokens, &self.affirmative_tokens)
            .map_err(|why| ConfigError::invalid("scoring.affirmative_tokens", why))
    }
}

fn check_token_sets(candidates: &[String], affirmative: &[String]) -> Result<(), String> {
    let mut distinct = candidates.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err("candidate set needs at least two distinct tokens".into());
    }
    if affirmative.is_empty() {
        return Err("affirmative set must not be empty".into());
    }
    if let Some(tok) = affirmative.iter().find(|t| !candidates.contains(t)) {
        return Err(format!("affirmative token {tok:?} is not a candidate"));
    }
    if distinct.iter().all(|c| affirmative.contains(c)) {
        return Err("at least one candidate must be non-affirmative".into());
    }
    Ok(())
}

/// Next-token logits restricted to the tokens that matter for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvidence {
    entries: BTreeMap<String, f64>,
    candidate_set: Vec<String>,
    affirmative_set: Vec<String>,
}

impl TokenEvidence {
    /// Checks the token-set invariants. Logit coverage is checked when
    /// scoring so that a missing token surfaces as [`RelevanceError::MissingLogit`].
    pub fn new(
        entries: BTreeMap<String, f64>,
        candidate_set: Vec<String>,
        affirmative_set: Vec<String>,
    ) -> Result<Self, RelevanceError> {
        check_token_sets(&candidate_set, &affirmative_set).map_err(RelevanceError::InvalidEvidence)?;
        let mut candidate_set = candidate_set;
        let mut seen = Vec::new();
        candidate_set.retain(|t| {
            let fresh = !seen.contains(t);
            if fresh {
                seen.push(t.clone());
            }
            fresh
        });
        Ok(TokenEvidence {
            entries,
            candidate_set,
            affirmative_set,
        })
    }

    /// Evidence over the configured polar sets.
    pub fn with_config(
        entries: BTreeMap<String, f64>,
        cfg: &ScoringConfig,
    ) -> Result<Self, RelevanceError> {
        Self::new(
            entries,
            cfg.candidate_tokens.clone(),
            cfg.affirmative_tokens.clone(),
        )
    }

    /// Two-token shorthand, mostly for tests and examples.
    pub fn polar(yes: f64, no: f64) -> Self {
        let entries = BTreeMap::from([("Yes".to_string(), yes), ("No".to_string(), no)]);
        Self::with_config(entries, &ScoringConfig::default()).expect("default sets are valid")
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn candidate_set(&self) -> &[String] {
        &self.candidate_set
    }

    pub fn affirmative_set(&self) -> &[String] {
        &self.affirmative_set
    }

    pub fn logit(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }
}

/// Softmax mass on the affirmative tokens, over the candidate set.
///
/// The maximum scaled logit is subtracted before exponentiation; the ratio is
/// unchanged and no term can overflow.
pub fn relevance_score(evidence: &TokenEvidence, cfg: &ScoringConfig) -> Result<f64, RelevanceError> {
    let tau = cfg.temperature;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(RelevanceError::NonPositiveTemperature(tau));
    }
    let mut scaled = Vec::with_capacity(evidence.candidate_set.len());
    for token in &evidence.candidate_set {
        let logit = evidence
            .logit(token)
            .ok_or_else(|| RelevanceError::MissingLogit(token.clone()))?;
        if !logit.is_finite() {
            return Err(RelevanceError::NonFiniteLogit(token.clone()));
        }
        scaled.push((token, logit / tau));
    }
    let max = scaled.iter().map(|(_, z)| *z).fold(f64::NEG_INFINITY, f64::max);
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (token, z) in scaled {
        let w = (z - max).exp();
        denominator += w;
        if evidence.affirmative_set.contains(token) {
            numerator += w;
        }
    }
    Ok(numerator / denominator)
}

/// Relevance score and optional region likelihood for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceResult {
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_likelihood: Option<f64>,
}

impl RelevanceResult {
    pub fn new(score: f64) -> Self {
        RelevanceResult {
            score,
            region_likelihood: None,
        }
    }

    pub fn with_region(score: f64, region_likelihood: f64) -> Self {
        RelevanceResult {
            score,
            region_likelihood: Some(region_likelihood),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Scoring(#[from] RelevanceError),
}

/// Per-call context that a provider may use.
#[derive(Debug, Clone, Default)]
pub struct ScoreContext {
    /// Seed of the running episode; all synthetic noise derives from it.
    pub episode_seed: u64,
    /// Region label of the agent's cell, when known.
    pub agent_region: Option<String>,
}

/// Anything that can score an observation against a question.
///
/// Implementations are shared across concurrently running episodes.
pub trait RelevanceProvider: Send + Sync {
    fn score(
        &self,
        obs: &Observation,
        question: &Question,
        ctx: &ScoreContext,
    ) -> Result<RelevanceResult, ProviderError>;
}

/// Calibration of the synthetic scorer.
///
/// `score = clamp(logistic(slope * f + intercept) + noise, 0, 1)`, where `f`
/// is the fraction of the question's required evidence that the observation
/// shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCalibration {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the zero-mean uniform noise added to both outputs.
    pub noise_half_width: f64,
    pub region_hit: f64,
    pub region_miss: f64,
}

impl Default for SyntheticCalibration {
    fn default() -> Self {
        SyntheticCalibration {
            slope: 6.0,
            intercept: -2.5,
            noise_half_width: 0.05,
            region_hit: 0.9,
            region_miss: 0.1,
        }
    }
}

impl SyntheticCalibration {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [self.slope, self.intercept, self.noise_half_width];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::invalid("provider", "calibration values must be finite"));
        }
        if self.noise_half_width < 0.0 {
            return Err(ConfigError::invalid("provider.noise_half_width", "must be >= 0"));
        }
        for (name, v) in [("provider.region_hit", self.region_hit), ("provider.region_miss", self.region_miss)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::invalid(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Noise-free score for an evidence fraction.
    pub fn calibrate(&self, fraction: f64) -> f64 {
        logistic(self.slope * fraction + self.intercept)
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Deterministic stand-in for a vision-language relevance query.
#[derive(Debug, Clone, Default)]
pub struct SyntheticProvider {
    calibration: SyntheticCalibration,
}

impl SyntheticProvider {
    pub fn new(calibration: SyntheticCalibration) -> Self {
        SyntheticProvider { calibration }
    }

    pub fn calibration(&self) -> &SyntheticCalibration {
        &self.calibration
    }

    fn noise(&self, seed: u64, label: &str, obs: &Observation, question: &Question) -> f64 {
        let w = self.calibration.noise_half_width;
        if w == 0.0 {
            return 0.0;
        }
        let mut key = obs.id.as_bytes().to_vec();
        key.push(0);
        key.extend_from_slice(question.id.as_bytes());
        (2.0 * keyed_unit(seed, label, &key) - 1.0) * w
    }
}

impl RelevanceProvider for SyntheticProvider {
    fn score(
        &self,
        obs: &Observation,
        question: &Question,
        ctx: &ScoreContext,
    ) -> Result<RelevanceResult, ProviderError> {
        let f = evidence_fraction(obs, question);
        let score = self.calibration.calibrate(f) + self.noise(ctx.episode_seed, "noise", obs, question);
        let base = match &ctx.agent_region {
            Some(region) if *region == question.target_region => self.calibration.region_hit,
            _ => self.calibration.region_miss,
        };
        let rho = base + self.noise(ctx.episode_seed, "region-noise", obs, question);
        Ok(RelevanceResult::with_region(
            score.clamp(0.0, 1.0),
            rho.clamp(0.0, 1.0),
        ))
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn multi(tokens: &[(&str, f64)], affirmative: &[&str]) -> TokenEvidence {
        TokenEvidence::new(
            tokens.iter().map(|(t, l)| (t.to_string(), *l)).collect(),
            tokens.iter().map(|(t, _)| t.to_string()).collect(),
            affirmative.iter().map(|t| t.to_string()).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn shift_invariant(a in -50.0..50.0f64, b in -50.0..50.0f64, c in -50.0..50.0f64, shift in -200.0..200.0f64) {
            let cfg = ScoringConfig::default();
            let base = multi(&[("Yes", a), ("yes", b), ("No", c)], &["Yes", "yes"]);
            let moved = multi(&[("Yes", a + shift), ("yes", b + shift), ("No", c + shift)], &["Yes", "yes"]);
            let s0 = relevance_score(&base, &cfg).unwrap();
            let s1 = relevance_score(&moved, &cfg).unwrap();
            prop_assert!((s0 - s1).abs() < 1e-9);
        }

        #[test]
        fn strictly_inside_unit_interval(a in -15.0..15.0f64, b in -15.0..15.0f64, t in 1.0..10.0f64) {
            let s = relevance_score(&TokenEvidence::polar(a, b), &ScoringConfig { temperature: t, ..Default::default() }).unwrap();
            prop_assert!(s > 0.0 && s < 1.0);
        }

        #[test]
        fn monotone_in_each_logit(a in -10.0..10.0f64, b in -10.0..10.0f64, bump in 0.01..5.0f64) {
            let cfg = ScoringConfig::default();
            let s = relevance_score(&TokenEvidence::polar(a, b), &cfg).unwrap();
            let up = relevance_score(&TokenEvidence::polar(a + bump, b), &cfg).unwrap();
            let down = relevance_score(&TokenEvidence::polar(a, b + bump), &cfg).unwrap();
            prop_assert!(up > s);
            prop_assert!(down < s);
        }
    }
}
