//! Batch runner for ablation suites.
//!
//! Episodes run on a bounded worker pool and are sorted by
//! `(variant, question id, seed, split)` before aggregation, so reports do
//! not depend on scheduling.

mod report;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{classify_serde_error, ConfigError, RunConfig};
pub use crate::explore::{Backbone, EpisodeResult, Variant};
use crate::explore::{run_episode, Agent, Components, EpisodeOutcome, ExploreError};
use crate::world::{Split, Suite, WorldError};

pub use report::{
    emit_report, read_trace, render, strip_wall_time, write_episode_logs, MetricsRow, ReportFormat,
    SuiteReport, TraceLine,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("suite: {0}")]
    SuiteParse(#[from] WorldError),
    #[error("episode {episode}: {source}")]
    Episode {
        episode: String,
        #[source]
        source: ExploreError,
    },
    #[error("{failed} of {total} episodes failed")]
    PartialFailure { failed: usize, total: usize },
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report format: {0}")]
    Format(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// What to run: which suite, which ablation rungs, which seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Directory holding `suite.json`. Relative paths resolve against the
    /// config file's directory.
    pub suite: PathBuf,
    pub variants: Vec<Variant>,
    pub backbone: Backbone,
    pub seeds: Vec<u64>,
    pub splits: Vec<Split>,
    pub parallelism: usize,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            suite: PathBuf::from("suite"),
            variants: Variant::LADDER.to_vec(),
            backbone: Backbone::Fbe,
            seeds: vec![0, 1, 2],
            splits: Split::BOTH.to_vec(),
            parallelism: 1,
            run: RunConfig::default(),
        }
    }
}

fn distinct<T: Ord>(items: &[T]) -> bool {
    items.iter().collect::<BTreeSet<_>>().len() == items.len()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.variants.is_empty() || !distinct(&self.variants) {
            return Err(ConfigError::invalid("variants", "must be non-empty and distinct"));
        }
        if self.seeds.is_empty() || !distinct(&self.seeds) {
            return Err(ConfigError::invalid("seeds", "must be non-empty and distinct"));
        }
        if self.splits.is_empty() || !distinct(&self.splits) {
            return Err(ConfigError::invalid("splits", "must be non-empty and distinct"));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::invalid("parallelism", "must be >= 1"));
        }
        self.run.validate()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = if text.trim().is_empty() {
            ExperimentConfig::default()
        } else {
            serde_json::from_str(text).map_err(classify_serde_error)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; a relative `suite` path is taken relative to it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        if cfg.suite.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.suite = dir.join(&cfg.suite);
            }
        }
        Ok(cfg)
    }
}

/// Identifies one episode; also its sort key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EpisodeKey {
    pub variant: Variant,
    pub question_id: String,
    pub seed: u64,
    pub split: Split,
}

/// Runs every (variant, question, seed, split) episode and maps each
/// outcome through `f` on the worker that produced it. Results come back
/// sorted by [`EpisodeKey`].
pub fn run_episodes<T, F>(
    cfg: &ExperimentConfig,
    suite: &Suite,
    components: &Components,
    f: F,
) -> Result<Vec<(EpisodeKey, T)>, HarnessError>
where
    T: Send,
    F: Fn(EpisodeOutcome) -> T + Sync,
{
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &variant in &cfg.variants {
        for scenario in &suite.scenarios {
            for q in &scenario.questions {
                for &seed in &cfg.seeds {
                    for &split in &cfg.splits {
                        let key = EpisodeKey {
                            variant,
                            question_id: q.id().to_string(),
                            seed,
                            split,
                        };
                        let agent = Agent {
                            world: scenario.world(split),
                            question: q.get(split),
                            components,
                            config: &cfg.run,
                            variant,
                            backbone: cfg.backbone,
                            split,
                            seed,
                        };
                        jobs.push((key, agent));
                    }
                }
            }
        }
    }
    jobs.sort_by(|a, b| a.0.cmp(&b.0));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| {
        jobs.into_par_iter()
            .map(|(key, agent)| match run_episode(&agent) {
                Ok(outcome) => Ok((key, f(outcome))),
                Err(source) => Err(HarnessError::Episode {
                    episode: agent.episode_id(),
                    source,
                }),
            })
            .collect()
    })
}

/// Runs the suite and aggregates the metrics.
pub fn run_suite(
    cfg: &ExperimentConfig,
    suite: &Suite,
    components: &Components,
) -> Result<SuiteReport, HarnessError> {
    let results = run_episodes(cfg, suite, components, |o| o.result)?;
    Ok(SuiteReport::from_results(
        cfg.backbone,
        &cfg.seeds,
        results.into_iter().map(|(_, r)| r).collect(),
    ))
}
