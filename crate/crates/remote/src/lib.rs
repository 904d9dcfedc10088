//! Client for OpenAI-compatible chat-completion and embedding endpoints.
//!
//! Relevance scores come from the first generated position's top-logprob
//! list. Log-probabilities differ from logits by a constant per position,
//! and the score is shift-invariant, so they are used as-is. See
//! `docs/protocol.md` for the exact request and response fields.
//!
//! [`mock::MockServer`] is a deterministic local server; all tests in this
//! crate use it and none touch the network.

mod adapters;
mod client;
pub mod mock;
pub mod protocol;
mod tokens;

use divrr::config::ConfigError;
use divrr::relevance::RelevanceError;
use thiserror::Error;

pub use adapters::{
    answer_prompt, components, extract_option, fetch_answer, grade, region_prompt, relevance_prompt,
    RemoteAnswerer, RemoteEmbedder, RemoteRelevance, NO_OBSERVATIONS,
};
pub use client::{backoff_delay, RemoteClient, BACKOFF_JITTER};
pub use tokens::{evidence_from_top_logprobs, normalize_token, FLOOR_OFFSET};

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("candidate tokens missing from top logprobs: {0:?}")]
    MissingCandidates(Vec<String>),
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("embedding has zero norm")]
    DegenerateEmbedding,
    #[error("completion is empty")]
    EmptyCompletion,
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error(transparent)]
    Scoring(#[from] RelevanceError),
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/remote.md")]
mod book_remote {}
