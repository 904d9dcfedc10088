//! Run configuration: one JSON file plus one seed fully specifies a run.
//!
//! Every section is optional in the file; missing fields take the defaults
//! below. Unknown keys are rejected so that a misspelt threshold name fails
//! loudly instead of silently falling back to its default.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::ValidityConfig;
use crate::refine::RefineConfig;
use crate::relevance::{ScoringConfig, SyntheticCalibration};

/// Relevance temperature.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
/// Admission threshold; also the upper edge of the ambiguity band.
pub const DEFAULT_TAU_MEM: f64 = 0.8;
/// Lower edge of the ambiguity band.
pub const DEFAULT_TAU_ROT: f64 = 0.6;
/// Region-likelihood threshold. Not a published value.
pub const DEFAULT_TAU_REG: f64 = 0.5;
/// Camera field of view in degrees.
pub const DEFAULT_FOV_DEGREES: f64 = 110.0;
/// Maximum auxiliary views per waypoint.
pub const DEFAULT_SENSING_BUDGET: usize = 3;
/// Embedding dimension.
pub const DEFAULT_EMBEDDING_DIM: usize = 768;
/// Waypoints per episode.
pub const DEFAULT_STEP_BUDGET: usize = 60;
/// Simulation timesteps consumed by one waypoint move.
pub const DEFAULT_MOVE_DT: u32 = 10;
/// Visibility range in grid cells.
pub const DEFAULT_VISIBILITY_RANGE: f64 = 8.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {constraint}")]
    Validation { field: String, constraint: String },
    #[error("duplicate stream label `{0}`")]
    DuplicateLabel(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, constraint: impl fmt::Display) -> Self {
        ConfigError::Validation {
            field: field.into(),
            constraint: constraint.to_string(),
        }
    }
}

/// Sensor geometry shared by the world and the refinement controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Maximum Euclidean distance, in cells, at which anything is seen.
    pub range: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            range: DEFAULT_VISIBILITY_RANGE,
        }
    }
}

/// What to do when a candidate token is missing from a remote top-k list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingCandidatePolicy {
    #[default]
    Error,
    /// Impute the missing token at `min observed logprob - 5`.
    Floor,
}

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub embedding_model: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub top_logprobs: u32,
    pub backoff_base_secs: f64,
    pub max_in_flight: usize,
    pub missing_candidates: MissingCandidatePolicy,
    /// Trim and case-fold tokens before matching them against candidates.
    pub normalize_tokens: bool,
    /// Ask a second yes/no question for the region likelihood.
    pub region_query: bool,
    pub answer_max_tokens: u32,
    pub prompt_version: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "Qwen2.5-VL-7B-Instruct".into(),
            api_key_env: "DIVRR_API_KEY".into(),
            embedding_model: None,
            timeout_secs: 30.0,
            max_retries: 3,
            top_logprobs: 20,
            backoff_base_secs: 0.5,
            max_in_flight: 4,
            missing_candidates: MissingCandidatePolicy::Error,
            normalize_tokens: true,
            region_query: false,
            answer_max_tokens: 64,
            prompt_version: "v1".into(),
        }
    }
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let url = self.base_url.trim();
        if !(url.starts_with("http://") || url.starts_with("https://")) || url.len() <= 8 {
            return Err(ConfigError::invalid(
                "provider.base_url",
                format!("must be an absolute http(s) URL, got {url:?}"),
            ));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(ConfigError::invalid("provider.timeout_secs", "must be > 0"));
        }
        if self.top_logprobs == 0 {
            return Err(ConfigError::invalid("provider.top_logprobs", "must be >= 1"));
        }
        if !(self.backoff_base_secs >= 0.0 && self.backoff_base_secs.is_finite()) {
            return Err(ConfigError::invalid("provider.backoff_base_secs", "must be >= 0"));
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::invalid("provider.max_in_flight", "must be >= 1"));
        }
        if self.model_name.trim().is_empty() {
            return Err(ConfigError::invalid("provider.model_name", "must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Synthetic(SyntheticCalibration),
    Remote(RemoteConfig),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Synthetic(SyntheticCalibration::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scoring: ScoringConfig,
    pub refine: RefineConfig,
    pub validity: ValidityConfig,
    pub sensor: SensorConfig,
    pub embedding_dim: usize,
    pub provider: ProviderConfig,
    pub step_budget: usize,
    pub move_dt: u32,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scoring: ScoringConfig::default(),
            refine: RefineConfig::default(),
            validity: ValidityConfig::default(),
            sensor: SensorConfig::default(),
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            provider: ProviderConfig::default(),
            step_budget: DEFAULT_STEP_BUDGET,
            move_dt: DEFAULT_MOVE_DT,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scoring.validate()?;
        self.refine.validate()?;
        self.validity.validate()?;
        if !(self.sensor.range > 0.0 && self.sensor.range.is_finite()) {
            return Err(ConfigError::invalid("sensor.range", "must be > 0"));
        }
        if self.embedding_dim == 0 {
            return Err(ConfigError::invalid("embedding_dim", "must be >= 1"));
        }
        if self.step_budget == 0 {
            return Err(ConfigError::invalid("step_budget", "must be >= 1"));
        }
        match &self.provider {
            ProviderConfig::Synthetic(cal) => cal.validate()?,
            ProviderConfig::Remote(remote) => remote.validate()?,
        }
        Ok(())
    }

    /// Parses and validates a config document. Blank input yields defaults.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = if text.trim().is_empty() {
            RunConfig::default()
        } else {
            serde_json::from_str(text).map_err(classify_serde_error)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Reads, parses and validates a run configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json_str(&text)
}

/// Unknown keys surface from serde as parse errors; report them as
/// validation failures that name the key.
pub(crate) fn classify_serde_error(err: serde_json::Error) -> ConfigError {
    let msg = err.to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return ConfigError::invalid(&rest[..end], format!("unknown key ({msg})"));
        }
    }
    ConfigError::Parse(msg)
}
