use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{next_action, Action, Backbone, ExplorationState, PolicyInput};
use crate::config::{ProviderConfig, RunConfig};
use crate::memory::{
    admission_gate, is_valid, make_entry, update_memory, Admission, EmbeddingProvider, Memory,
    MemoryError, SyntheticEmbedder,
};
use crate::refine::{classify, collect_views, select_verified, RefineConfig, RefineError, Trigger, ViewSource};
use crate::relevance::{
    ProviderError, RelevanceProvider, RelevanceResult, ScoreContext, SyntheticProvider,
};
use crate::rng::{child_seed, stream};
use crate::world::{
    answer_oracle, observe, scan, Observation, Pose, Question, Sensor, Split, World,
    WorldClock, WorldError,
};

/// Rungs of the ablation ladder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Stores every valid view.
    #[serde(rename = "base")]
    Base,
    /// Adds the admission gate.
    #[serde(rename = "base+am")]
    BaseAm,
    /// Adds view refinement.
    #[serde(rename = "base+am+vr")]
    BaseAmVr,
    /// Adds region gating of refinement.
    #[default]
    #[serde(rename = "full")]
    Full,
    /// Off the ladder: refinement without the admission gate.
    #[serde(rename = "base+vr")]
    BaseVr,
}

impl Variant {
    /// The ablation ladder, each rung adding one component.
    pub const LADDER: [Variant; 4] = [Variant::Base, Variant::BaseAm, Variant::BaseAmVr, Variant::Full];
    pub const ALL: [Variant; 5] = [
        Variant::Base,
        Variant::BaseAm,
        Variant::BaseAmVr,
        Variant::Full,
        Variant::BaseVr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::BaseAm => "base+am",
            Variant::BaseAmVr => "base+am+vr",
            Variant::Full => "full",
            Variant::BaseVr => "base+vr",
        }
    }

    /// Row label in the ablation table.
    pub fn table_label(self) -> &'static str {
        match self {
            Variant::Base => "baseline",
            Variant::BaseAm => "Base+AM",
            Variant::BaseAmVr => "Base+AM+VR",
            Variant::Full => "Base+AM+VR+RD (full)",
            Variant::BaseVr => "Base+VR",
        }
    }

    pub fn gated(self) -> bool {
        !matches!(self, Variant::Base | Variant::BaseVr)
    }

    pub fn refines(self) -> bool {
        matches!(self, Variant::BaseAmVr | Variant::Full | Variant::BaseVr)
    }

    pub fn region_gated(self) -> bool {
        self == Variant::Full
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?} (expected base, base+am, base+am+vr, full or base+vr)"))
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl ExploreError {
    /// Failures of an external backend, which abort only the episode.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            ExploreError::Provider(_)
                | ExploreError::Refine(RefineError::Provider(_))
                | ExploreError::Memory(MemoryError::EmbedderUnavailable(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub correct: bool,
}

/// Produces the final answer from the question and the admitted memory.
pub trait Answerer: Send + Sync {
    fn answer(&self, question: &Question, memory: &Memory) -> Result<Answer, ProviderError>;
}

/// Answers correctly exactly when memory holds all required evidence.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAnswerer;

impl Answerer for OracleAnswerer {
    fn answer(&self, question: &Question, memory: &Memory) -> Result<Answer, ProviderError> {
        let (text, correct) = answer_oracle(question, memory);
        Ok(Answer { text, correct })
    }
}

/// The pluggable parts of an agent.
#[derive(Clone)]
pub struct Components {
    pub relevance: Arc<dyn RelevanceProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub answerer: Arc<dyn Answerer>,
}

impl Components {
    /// Synthetic scorer, seeded embedder and oracle answerer. A remote
    /// provider section in `cfg` is ignored here.
    pub fn synthetic(cfg: &RunConfig) -> Self {
        let calibration = match &cfg.provider {
            ProviderConfig::Synthetic(c) => c.clone(),
            ProviderConfig::Remote(_) => Default::default(),
        };
        Components {
            relevance: Arc::new(SyntheticProvider::new(calibration)),
            embedder: Arc::new(SyntheticEmbedder::new(cfg.embedding_dim, cfg.seed)),
            answerer: Arc::new(OracleAnswerer),
        }
    }
}

impl fmt::Debug for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Components").finish_non_exhaustive()
    }
}

/// Everything one episode runs with.
#[derive(Debug, Clone, Copy)]
pub struct Agent<'a> {
    pub world: &'a World,
    pub question: &'a Question,
    pub components: &'a Components,
    pub config: &'a RunConfig,
    pub variant: Variant,
    pub backbone: Backbone,
    pub split: Split,
    /// Suite-level seed; the episode seed is derived from it and the
    /// question id, so both splits of a question share it.
    pub seed: u64,
}

impl Agent<'_> {
    pub fn episode_seed(&self) -> u64 {
        child_seed(self.seed, &self.question.id)
    }

    pub fn episode_id(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.variant, self.backbone, self.question.id, self.split, self.seed
        )
    }

    /// Thresholds with region gating set by the variant.
    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            region_gating_enabled: self.variant.region_gated(),
            ..self.config.refine.clone()
        }
    }

    pub fn sensor(&self) -> Sensor {
        self.config.refine.sensor(self.config.sensor.range)
    }

    /// Seeded start: the question's start cell, else a free cell of its
    /// target region (any free cell if the region is unknown), facing one
    /// of the four axis headings.
    pub fn start_pose(&self) -> Pose {
        let mut rng = stream(self.episode_seed(), "start");
        let mut free = self.world.region_cells(&self.question.target_region);
        if free.is_empty() {
            free = self.world.free_cells().collect();
        }
        let cell = match self.question.start {
            Some(c) if self.world.is_free(c) => c,
            _ => *free.choose(&mut rng).expect("world has free cells"),
        };
        let heading = 90.0 * rng.random_range(0..4) as f64;
        Pose::new(cell, heading, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub observation_id: String,
    pub heading: f64,
    pub score: f64,
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointRecord {
    pub waypoint: u64,
    pub pose: Pose,
    pub observation_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_likelihood: Option<f64>,
    pub trigger: Trigger,
    /// Auxiliary views taken here, in rotation order.
    pub views: Vec<ViewRecord>,
    pub selected_id: String,
    pub selected_score: f64,
    pub selected_valid: bool,
    pub gate: bool,
    pub memory_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
}

#[derive(Debug, Clone)]
pub struct WaypointOutcome {
    pub record: WaypointRecord,
    /// The original, unrotated view.
    pub observation: Observation,
    pub result: RelevanceResult,
}

/// One sense, score, refine, admit cycle at `pose`. Writes at most one
/// entry to `memory`.
pub fn run_waypoint(
    agent: &Agent,
    memory: &mut Memory,
    waypoint: u64,
    pose: &Pose,
) -> Result<WaypointOutcome, ExploreError> {
    let cfg = agent.refine_config();
    let sensor = agent.sensor();
    let provider = agent.components.relevance.as_ref();
    let observation = observe(agent.world, pose, &sensor)?;
    let ctx = ScoreContext {
        episode_seed: agent.episode_seed(),
        agent_region: agent.world.region_of(pose.cell()).map(String::from),
    };
    let result = provider.score(&observation, agent.question, &ctx)?;
    let trigger = classify(&result, &cfg);

    let mut views = Vec::new();
    let mut selected = (&observation, result.score);
    let view_set;
    if agent.variant.refines() && trigger == Trigger::Refine {
        view_set = collect_views(agent.world, pose, agent.question, provider, &ctx, &cfg, &sensor)?;
        views = view_set
            .views
            .iter()
            .map(|v| ViewRecord {
                observation_id: v.observation.id.clone(),
                heading: v.observation.pose.heading,
                score: v.score(),
            })
            .collect();
        match select_verified(&view_set, (&observation, result.score), cfg.include_original_in_argmax) {
            Some((ViewSource::Rotation(i), s)) => selected = (&view_set.views[i].observation, s),
            Some((ViewSource::Original, _)) | None => {}
        }
    }

    let (chosen, score) = selected;
    let valid = is_valid(chosen, &agent.config.validity);
    let gate = if agent.variant.gated() {
        admission_gate(score, valid, cfg.tau_mem)
    } else {
        valid
    };
    let admission = if gate {
        let entry = make_entry(
            chosen,
            &chosen.pose,
            waypoint,
            score,
            agent.components.embedder.as_ref(),
            memory.embedding_dim,
        )?;
        Some(Admission {
            entry,
            observation: chosen.clone(),
        })
    } else {
        None
    };
    update_memory(memory, admission, gate, waypoint)?;

    let record = WaypointRecord {
        waypoint,
        pose: *pose,
        observation_id: observation.id.clone(),
        score: result.score,
        region_likelihood: result.region_likelihood,
        trigger,
        views,
        selected_id: chosen.id.clone(),
        selected_score: score,
        selected_valid: valid,
        gate,
        memory_size: memory.len(),
        action: None,
    };
    Ok(WaypointOutcome {
        record,
        observation,
        result,
    })
}

/// Per-episode metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub question_id: String,
    pub world_id: String,
    pub category: String,
    pub split: Split,
    pub variant: Variant,
    pub backbone: Backbone,
    pub seed: u64,
    pub correct: bool,
    pub answer: String,
    pub admitted_count: usize,
    pub sensing_steps: usize,
    pub relevance_queries: usize,
    pub waypoints_visited: usize,
    pub wall_time_secs: f64,
    /// Set when a backend failure aborted the episode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub result: EpisodeResult,
    pub log: Vec<WaypointRecord>,
    pub memory: Memory,
}

/// Runs waypoints until the policy stops, the step budget is spent or the
/// world horizon is reached, then answers from memory.
pub fn run_episode(agent: &Agent) -> Result<EpisodeOutcome, ExploreError> {
    let started = Instant::now();
    let world = agent.world;
    let cfg = agent.config;
    let sensor = agent.sensor();
    let mut memory = Memory::new(cfg.embedding_dim);
    let mut state = ExplorationState::new(world.width, world.height);
    let mut rng = stream(agent.episode_seed(), "policy");
    let mut clock = WorldClock::new(world.horizon);
    let start = agent.start_pose();
    let (mut cell, mut heading) = (start.cell(), start.heading);

    let mut log = Vec::new();
    let mut failure = None;
    let (mut sensing_steps, mut queries) = (0, 0);

    for i in 0..cfg.step_budget {
        let pose = Pose::new(cell, heading, clock.now());
        let outcome = match run_waypoint(agent, &mut memory, i as u64, &pose) {
            Ok(o) => o,
            Err(e) if e.is_backend_failure() => {
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        sensing_steps += outcome.record.views.len();
        queries += 1 + outcome.record.views.len();

        state.visit(cell);
        state.integrate(&scan(world, &pose, &sensor)?);
        let input = PolicyInput {
            world,
            pose: &pose,
            observation: &outcome.observation,
            score: outcome.result.score,
        };
        let action = next_action(agent.backbone, &input, &mut state, &mut rng);
        let mut record = outcome.record;
        record.action = Some(action);
        log.push(record);

        match action {
            Action::Stop => break,
            Action::MoveTo { cell: next } => {
                heading = cell.heading_to(next);
                cell = next;
            }
            Action::RotateInPlace { heading: h } => heading = h,
        }
        if !clock.can_advance(cfg.move_dt) {
            break;
        }
        clock.advance(cfg.move_dt)?;
    }

    let answer = match failure {
        Some(_) => None,
        None => match agent.components.answerer.answer(agent.question, &memory) {
            Ok(a) => Some(a),
            Err(e) => {
                failure = Some(e.to_string());
                None
            }
        },
    };
    let (answer, correct) = answer.map_or((String::new(), false), |a| (a.text, a.correct));

    let result = EpisodeResult {
        episode_id: agent.episode_id(),
        question_id: agent.question.id.clone(),
        world_id: agent.question.world_id.clone(),
        category: agent.question.category.as_str().to_string(),
        split: agent.split,
        variant: agent.variant,
        backbone: agent.backbone,
        seed: agent.seed,
        correct,
        answer,
        admitted_count: memory.len(),
        sensing_steps,
        relevance_queries: queries,
        waypoints_visited: log.len(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        failure,
    };
    Ok(EpisodeOutcome {
        result,
        log,
        memory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Category, Cell, EvidenceRequirement, Object};

    /// Scores a view by its heading alone.
    struct ByHeading(Vec<(f64, f64)>);

    impl RelevanceProvider for ByHeading {
        fn score(&self, obs: &Observation, _: &Question, _: &ScoreContext) -> Result<RelevanceResult, ProviderError> {
            let s = self
                .0
                .iter()
                .find(|(h, _)| (*h - obs.pose.heading).abs() < 1e-9)
                .map_or(0.0, |(_, s)| *s);
            Ok(RelevanceResult::with_region(s, 0.9))
        }
    }

    fn room() -> World {
        let mut rows = vec![vec![None; 7]; 7];
        for row in rows.iter_mut().take(6).skip(1) {
            for cell in row.iter_mut().take(6).skip(1) {
                *cell = Some(0);
            }
        }
        let objects = [(5, 3), (1, 3), (3, 1), (3, 5)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Object {
                id: format!("o{i}"),
                category: "cup".into(),
                attributes: [("color".to_string(), "red".to_string())].into(),
                cell: Cell::new(x, y),
            })
            .collect();
        World::from_rows("w".into(), rows, vec!["room".into()], objects, vec![], 120, 0).unwrap()
    }

    fn question() -> Question {
        Question {
            id: "q".into(),
            world_id: "w".into(),
            text: "What color is the cup?".into(),
            category: Category::Attribute,
            answer: "red".into(),
            required_evidence: vec![EvidenceRequirement {
                entity: "o0".into(),
                min_viewpoints: 2,
            }],
            target_region: "room".into(),
            choices: None,
            start: Some(Cell::new(3, 3)),
        }
    }

    fn components(scores: Vec<(f64, f64)>) -> Components {
        Components {
            relevance: Arc::new(ByHeading(scores)),
            embedder: Arc::new(SyntheticEmbedder::new(16, 0)),
            answerer: Arc::new(OracleAnswerer),
        }
    }

    fn config() -> RunConfig {
        RunConfig {
            embedding_dim: 16,
            ..RunConfig::default()
        }
    }

    fn waypoint(variant: Variant, scores: Vec<(f64, f64)>) -> (WaypointRecord, Memory) {
        let (world, q, comps, cfg) = (room(), question(), components(scores), config());
        let agent = Agent {
            world: &world,
            question: &q,
            components: &comps,
            config: &cfg,
            variant,
            backbone: Backbone::Fbe,
            split: Split::Static,
            seed: 0,
        };
        let mut memory = Memory::new(cfg.embedding_dim);
        let out = run_waypoint(&agent, &mut memory, 0, &Pose::new(Cell::new(3, 3), 0.0, 0)).unwrap();
        (out.record, memory)
    }

    #[test]
    fn high_score_is_admitted_directly() {
        let (rec, mem) = waypoint(Variant::Full, vec![(0.0, 0.85)]);
        assert_eq!(rec.trigger, Trigger::AdmitCandidate);
        assert!(rec.views.is_empty());
        assert_eq!(mem.len(), 1);
    }

    #[test]
    fn low_score_changes_nothing() {
        let (rec, mem) = waypoint(Variant::Full, vec![(0.0, 0.3)]);
        assert_eq!(rec.trigger, Trigger::Skip);
        assert!(!rec.gate);
        assert!(mem.is_empty());
    }

    #[test]
    fn ambiguous_view_is_replaced_by_better_rotation() {
        let scores = vec![(0.0, 0.7), (90.0, 0.92), (180.0, 0.2), (270.0, 0.4)];
        let (rec, mem) = waypoint(Variant::BaseAmVr, scores);
        assert_eq!(rec.trigger, Trigger::Refine);
        assert_eq!(rec.views.len(), 3);
        assert_eq!(rec.selected_score, 0.92);
        assert_eq!(mem.len(), 1);
        let entry = &mem.entries()[0];
        assert_eq!(entry.pose.heading, 90.0);
        assert_eq!(entry.admit_score, 0.92);
        // the unselected rotations never reach memory
        assert_eq!(mem.observations().count(), 1);
    }

    #[test]
    fn ladder_rungs_differ_only_where_expected() {
        let ambiguous = vec![(0.0, 0.7), (90.0, 0.92)];
        let (rec, mem) = waypoint(Variant::BaseAm, ambiguous.clone());
        assert!(rec.views.is_empty());
        assert!(mem.is_empty());
        let (_, mem) = waypoint(Variant::Base, vec![(0.0, 0.3)]);
        assert_eq!(mem.len(), 1, "base keeps every valid view");
        let (rec, mem) = waypoint(Variant::BaseVr, ambiguous);
        assert_eq!(rec.views.len(), 3);
        assert_eq!(mem.entries()[0].pose.heading, 90.0);
    }

    #[test]
    fn episode_counts_are_consistent() {
        let (world, q, cfg) = (room(), question(), config());
        let comps = Components::synthetic(&cfg);
        for variant in Variant::ALL {
            let agent = Agent {
                world: &world,
                question: &q,
                components: &comps,
                config: &cfg,
                variant,
                backbone: Backbone::Fbe,
                split: Split::Static,
                seed: 3,
            };
            assert_eq!(agent.start_pose().cell(), Cell::new(3, 3));
            let out = run_episode(&agent).unwrap();
            let r = &out.result;
            assert_eq!(r.waypoints_visited, out.log.len());
            assert_eq!(r.sensing_steps, out.log.iter().map(|w| w.views.len()).sum::<usize>());
            assert_eq!(r.relevance_queries, r.waypoints_visited + r.sensing_steps);
            assert_eq!(r.admitted_count, out.memory.len());
            assert!(out.log.iter().all(|w| w.views.len() <= cfg.refine.sensing_budget));
            assert!(r.failure.is_none());
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.as_str()));
        }
        assert!("base+rd".parse::<Variant>().is_err());
    }
}
