use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use divrr::config::RemoteConfig;
use divrr::memory::normalize;
use divrr::relevance::{ScoringConfig, TokenEvidence};
use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::protocol::{
    ChatRequest, ChatResponse, ContentPart, EmbeddingRequest, EmbeddingResponse, ImageUrl, Message,
};
use crate::tokens::evidence_from_top_logprobs;
use crate::RemoteError;

/// Relative jitter applied to every backoff delay.
pub const BACKOFF_JITTER: f64 = 0.2;

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight {
            limit: limit.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

/// Delay before retry number `attempt` (0-based), without jitter.
pub fn backoff_delay(base_secs: f64, attempt: u32) -> f64 {
    base_secs * 2f64.powi(attempt as i32)
}

/// Blocking client for one OpenAI-compatible endpoint. Safe to share
/// across threads; each call is an independent request.
#[derive(Debug)]
pub struct RemoteClient {
    cfg: RemoteConfig,
    http: Client,
    api_key: Option<String>,
    in_flight: InFlight,
}

impl RemoteClient {
    /// Validates the config and reads the API key from the configured
    /// environment variable. An unset variable means no auth header.
    pub fn new(cfg: RemoteConfig) -> Result<Self, RemoteError> {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: RemoteConfig, api_key: Option<String>) -> Result<Self, RemoteError> {
        cfg.validate()?;
        let http = Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        Ok(RemoteClient {
            in_flight: InFlight::new(cfg.max_in_flight),
            cfg,
            http,
            api_key,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.base_url.trim().trim_end_matches('/'))
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Attempt<R> {
        let _permit = self.in_flight.acquire();
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(RemoteError::Transport(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(RemoteError::Transport(e.to_string())),
        };
        if !status.is_success() {
            let err = RemoteError::Status {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            };
            let transient = status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error();
            return if transient { Attempt::Retry(err) } else { Attempt::Fatal(err) };
        }
        match serde_json::from_str(&text) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(RemoteError::MalformedResponse(e.to_string())),
        }
    }

    /// POSTs `body` as JSON, retrying transport failures, 429 and 5xx.
    /// Requests are pure reads, so a retry never duplicates an effect.
    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, RemoteError> {
        let url = self.endpoint(path);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.cfg.max_retries => return Err(e),
                Attempt::Retry(_) => {
                    let jitter = rand::rng().random_range(-BACKOFF_JITTER..=BACKOFF_JITTER);
                    let secs = backoff_delay(self.cfg.backoff_base_secs, attempt) * (1.0 + jitter);
                    std::thread::sleep(Duration::from_secs_f64(secs.max(0.0)));
                    attempt += 1;
                }
            }
        }
    }

    fn user_message(prompt: &str, image_png: Option<&[u8]>) -> Message {
        let mut parts = Vec::new();
        if let Some(bytes) = image_png {
            parts.push(ContentPart::ImageUrl {
                image_url: ImageUrl {
                    url: format!("data:image/png;base64,{}", B64.encode(bytes)),
                },
            });
        }
        parts.push(ContentPart::Text {
            text: prompt.to_string(),
        });
        Message::user(parts)
    }

    /// Asks for one token with logprobs and reads the candidate tokens off
    /// the first position's top-logprob list.
    pub fn fetch_token_evidence(
        &self,
        prompt: &str,
        image_png: Option<&[u8]>,
        scoring: &ScoringConfig,
    ) -> Result<TokenEvidence, RemoteError> {
        if prompt.trim().is_empty() {
            return Err(RemoteError::EmptyPrompt);
        }
        let req = ChatRequest {
            model: self.cfg.model_name.clone(),
            messages: vec![Self::user_message(prompt, image_png)],
            max_tokens: 1,
            temperature: 0.0,
            logprobs: true,
            top_logprobs: Some(self.cfg.top_logprobs),
        };
        let resp: ChatResponse = self.post("chat/completions", &req)?;
        let first = resp
            .choices
            .first()
            .ok_or_else(|| RemoteError::MalformedResponse("no choices".into()))?
            .logprobs
            .as_ref()
            .and_then(|l| l.content.as_ref())
            .and_then(|c| c.first())
            .ok_or_else(|| RemoteError::MalformedResponse("response has no logprobs".into()))?;
        evidence_from_top_logprobs(
            &first.top_logprobs,
            scoring,
            self.cfg.normalize_tokens,
            self.cfg.missing_candidates,
        )
    }

    /// Embeds `input` and L2-normalizes the result.
    pub fn fetch_embedding(&self, input: &str, expected_dim: usize) -> Result<Vec<f32>, RemoteError> {
        let req = EmbeddingRequest {
            model: self
                .cfg
                .embedding_model
                .clone()
                .unwrap_or_else(|| self.cfg.model_name.clone()),
            input: input.to_string(),
        };
        let resp: EmbeddingResponse = self.post("embeddings", &req)?;
        let raw = resp
            .data
            .into_iter()
            .next()
            .ok_or_else(|| RemoteError::MalformedResponse("no embedding data".into()))?
            .embedding;
        if raw.len() != expected_dim {
            return Err(RemoteError::DimensionMismatch {
                got: raw.len(),
                expected: expected_dim,
            });
        }
        let mut v: Vec<f32> = raw.into_iter().map(|x| x as f32).collect();
        normalize(&mut v).map_err(|_| RemoteError::DegenerateEmbedding)?;
        Ok(v)
    }

    /// Free-text completion, returned verbatim.
    pub fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, RemoteError> {
        if prompt.trim().is_empty() {
            return Err(RemoteError::EmptyPrompt);
        }
        let req = ChatRequest {
            model: self.cfg.model_name.clone(),
            messages: vec![Self::user_message(prompt, None)],
            max_tokens,
            temperature: 0.0,
            logprobs: false,
            top_logprobs: None,
        };
        let resp: ChatResponse = self.post("chat/completions", &req)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message)
            .and_then(|m| m.content)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(RemoteError::EmptyCompletion);
        }
        Ok(text)
    }
}

enum Attempt<R> {
    Done(R),
    Retry(RemoteError),
    Fatal(RemoteError),
}
