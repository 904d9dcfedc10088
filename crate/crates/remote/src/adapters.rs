//! Prompts and the provider adapters that plug a [`RemoteClient`] into an
//! agent.

use std::sync::Arc;

use divrr::config::{ProviderConfig, RunConfig};
use divrr::explore::{Answer, Answerer, Components};
use divrr::memory::{EmbeddingProvider, Memory, MemoryError};
use divrr::relevance::{
    relevance_score, ProviderError, RelevanceProvider, RelevanceResult, ScoreContext, ScoringConfig,
};
use divrr::world::{Observation, Question};

use crate::client::RemoteClient;
use crate::tokens::normalize_token;
use crate::RemoteError;

/// Written into answer prompts when memory is empty.
pub const NO_OBSERVATIONS: &str = "(no observations)";

fn option_letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

pub fn relevance_prompt(obs: &Observation, question: &Question) -> String {
    format!(
        "Question: {}\nCurrent view: {}.\nDoes this view help answer the question? Answer Yes or No.",
        question.text,
        obs.describe()
    )
}

pub fn region_prompt(obs: &Observation, question: &Question) -> String {
    format!(
        "Question: {}\nCurrent view: {}.\nIs the agent in the part of the scene where the answer is likely to be found? Answer Yes or No.",
        question.text,
        obs.describe()
    )
}

/// Question, lettered options, then admitted observations in admission order.
pub fn answer_prompt<'a>(question: &Question, observations: impl IntoIterator<Item = &'a Observation>) -> String {
    let mut p = format!("Question: {}\n", question.text);
    if let Some(choices) = &question.choices {
        p.push_str("Options:\n");
        for (i, c) in choices.iter().enumerate() {
            p.push_str(&format!("{}. {c}\n", option_letter(i)));
        }
    }
    p.push_str("Observations:\n");
    let mut any = false;
    for (i, o) in observations.into_iter().enumerate() {
        any = true;
        p.push_str(&format!("{}. {}\n", i + 1, o.describe()));
    }
    if !any {
        p.push_str(NO_OBSERVATIONS);
        p.push('\n');
    }
    if question.choices.is_some() {
        p.push_str("Reply with the letter of the correct option.");
    } else {
        p.push_str("Reply with a short answer.");
    }
    p
}

/// First option letter in `reply`, as an index into `n` options. A lone
/// lowercase letter counts; inside a sentence only capitals do, so the
/// article "a" is not read as option A.
pub fn extract_option(reply: &str, n: usize) -> Option<usize> {
    let words: Vec<&str> = reply
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    let pick = |w: &str, lower_ok: bool| {
        let mut chars = w.chars();
        let c = chars.next()?;
        if chars.next().is_some() || !(c.is_ascii_uppercase() || (lower_ok && c.is_ascii_lowercase())) {
            return None;
        }
        let i = (c.to_ascii_uppercase() as u8 - b'A') as usize;
        (i < n).then_some(i)
    };
    if words.len() == 1 {
        return pick(words[0], true);
    }
    words.iter().find_map(|w| pick(w, false))
}

/// Exact match after trim and case-fold. Multiple-choice replies are read
/// as an option letter first, then as option text.
pub fn grade(question: &Question, reply: &str) -> bool {
    let truth = normalize_token(&question.answer);
    if let Some(choices) = &question.choices {
        if let Some(i) = extract_option(reply, choices.len()) {
            return normalize_token(&choices[i]) == truth;
        }
    }
    normalize_token(reply) == truth
}

/// Builds the answer prompt from `memory` and returns the reply verbatim.
pub fn fetch_answer(client: &RemoteClient, question: &Question, memory: &Memory) -> Result<String, RemoteError> {
    let prompt = answer_prompt(question, memory.observations());
    client.complete(&prompt, client.config().answer_max_tokens)
}

fn provider_error(e: RemoteError) -> ProviderError {
    match e {
        RemoteError::MalformedResponse(_) | RemoteError::MissingCandidates(_) | RemoteError::EmptyCompletion => {
            ProviderError::MalformedResponse(e.to_string())
        }
        RemoteError::Scoring(s) => ProviderError::Scoring(s),
        other => ProviderError::Unavailable(other.to_string()),
    }
}

pub struct RemoteRelevance {
    client: Arc<RemoteClient>,
    scoring: ScoringConfig,
}

impl RemoteRelevance {
    pub fn new(client: Arc<RemoteClient>, scoring: ScoringConfig) -> Self {
        RemoteRelevance { client, scoring }
    }

    fn ask(&self, prompt: &str) -> Result<f64, ProviderError> {
        let ev = self
            .client
            .fetch_token_evidence(prompt, None, &self.scoring)
            .map_err(provider_error)?;
        Ok(relevance_score(&ev, &self.scoring)?)
    }
}

impl RelevanceProvider for RemoteRelevance {
    fn score(&self, obs: &Observation, question: &Question, _: &ScoreContext) -> Result<RelevanceResult, ProviderError> {
        let score = self.ask(&relevance_prompt(obs, question))?;
        if self.client.config().region_query {
            let region = self.ask(&region_prompt(obs, question))?;
            Ok(RelevanceResult::with_region(score, region))
        } else {
            Ok(RelevanceResult::new(score))
        }
    }
}

pub struct RemoteEmbedder {
    client: Arc<RemoteClient>,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(client: Arc<RemoteClient>, dim: usize) -> Self {
        RemoteEmbedder { client, dim }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, obs: &Observation) -> Result<Vec<f32>, MemoryError> {
        self.client
            .fetch_embedding(&obs.describe(), self.dim)
            .map_err(|e| match e {
                RemoteError::DimensionMismatch { got, expected } => {
                    MemoryError::EmbeddingDimensionMismatch { got, expected }
                }
                RemoteError::DegenerateEmbedding => MemoryError::DegenerateEmbedding,
                other => MemoryError::EmbedderUnavailable(other.to_string()),
            })
    }
}

pub struct RemoteAnswerer {
    client: Arc<RemoteClient>,
}

impl RemoteAnswerer {
    pub fn new(client: Arc<RemoteClient>) -> Self {
        RemoteAnswerer { client }
    }
}

impl Answerer for RemoteAnswerer {
    fn answer(&self, question: &Question, memory: &Memory) -> Result<Answer, ProviderError> {
        let text = fetch_answer(&self.client, question, memory).map_err(provider_error)?;
        let correct = grade(question, &text);
        Ok(Answer { text, correct })
    }
}

/// Components backed by the endpoint in `cfg.provider`. A synthetic
/// provider section yields the synthetic components.
pub fn components(cfg: &RunConfig) -> Result<Components, RemoteError> {
    let remote = match &cfg.provider {
        ProviderConfig::Remote(r) => r.clone(),
        ProviderConfig::Synthetic(_) => return Ok(Components::synthetic(cfg)),
    };
    let client = Arc::new(RemoteClient::new(remote)?);
    Ok(Components {
        relevance: Arc::new(RemoteRelevance::new(client.clone(), cfg.scoring.clone())),
        embedder: Arc::new(RemoteEmbedder::new(client.clone(), cfg.embedding_dim)),
        answerer: Arc::new(RemoteAnswerer::new(client)),
    })
}
