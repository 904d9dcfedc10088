//! View refinement: decide when a view is ambiguous, look around in place,
//! and keep the single best view.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{
    ConfigError, DEFAULT_FOV_DEGREES, DEFAULT_SENSING_BUDGET, DEFAULT_TAU_MEM, DEFAULT_TAU_REG,
    DEFAULT_TAU_ROT,
};
use crate::relevance::{ProviderError, RelevanceProvider, RelevanceResult, ScoreContext};
use crate::world::{observe, Observation, Pose, Question, Sensor, World, WorldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    /// Lower edge of the ambiguity band, inclusive.
    pub tau_rot: f64,
    /// Admission threshold and upper edge of the band, exclusive.
    pub tau_mem: f64,
    /// Minimum region likelihood for refinement when gating is on.
    pub tau_reg: f64,
    pub region_gating_enabled: bool,
    /// Rotated views requested per trigger (K).
    pub view_budget: usize,
    /// Hard cap on auxiliary views per waypoint (N).
    pub sensing_budget: usize,
    pub fov_degrees: f64,
    /// Let the original view compete with the rotated ones.
    pub include_original_in_argmax: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            tau_rot: DEFAULT_TAU_ROT,
            tau_mem: DEFAULT_TAU_MEM,
            tau_reg: DEFAULT_TAU_REG,
            region_gating_enabled: false,
            view_budget: DEFAULT_SENSING_BUDGET,
            sensing_budget: DEFAULT_SENSING_BUDGET,
            fov_degrees: DEFAULT_FOV_DEGREES,
            include_original_in_argmax: true,
        }
    }
}

fn unit(field: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must lie in [0, 1], got {v}")))
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        unit("refine.tau_rot", self.tau_rot)?;
        unit("refine.tau_mem", self.tau_mem)?;
        unit("refine.tau_reg", self.tau_reg)?;
        if self.tau_rot >= self.tau_mem {
            return Err(ConfigError::invalid(
                "refine.tau_rot",
                format!(
                    "must be below tau_mem ({} >= {}), otherwise the ambiguity band is empty",
                    self.tau_rot, self.tau_mem
                ),
            ));
        }
        if self.sensing_budget == 0 {
            return Err(ConfigError::invalid("refine.sensing_budget", "must be >= 1"));
        }
        if self.view_budget == 0 || self.view_budget > self.sensing_budget {
            return Err(ConfigError::invalid(
                "refine.view_budget",
                format!("must lie in [1, sensing_budget = {}]", self.sensing_budget),
            ));
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees < 360.0) {
            return Err(ConfigError::invalid("refine.fov_degrees", "must lie in (0, 360)"));
        }
        Ok(())
    }

    pub fn sensor(&self, range: f64) -> Sensor {
        Sensor {
            fov_degrees: self.fov_degrees,
            range,
        }
    }
}

/// How a scored view is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Below the band: not refined, not admitted.
    Skip,
    /// Inside the band: look around.
    Refine,
    /// At or above `tau_mem`: goes straight to the admission gate.
    AdmitCandidate,
    /// Inside the band, but the region likelihood is below `tau_reg`.
    RegionSuppressed,
    /// Inside the band with gating on, but no region likelihood was given.
    GatingSkipped,
}

/// Classifies a score against the band. Exactly one outcome applies.
pub fn classify(result: &RelevanceResult, cfg: &RefineConfig) -> Trigger {
    let s = result.score;
    if s >= cfg.tau_mem {
        return Trigger::AdmitCandidate;
    }
    if s < cfg.tau_rot {
        return Trigger::Skip;
    }
    if !cfg.region_gating_enabled {
        return Trigger::Refine;
    }
    match result.region_likelihood {
        None => Trigger::GatingSkipped,
        Some(rho) if rho >= cfg.tau_reg => Trigger::Refine,
        Some(_) => Trigger::RegionSuppressed,
    }
}

pub fn should_refine(result: &RelevanceResult, cfg: &RefineConfig) -> bool {
    classify(result, cfg) == Trigger::Refine
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("requested {requested} views but the sensing budget is {cap}")]
    BudgetExceeded { requested: usize, cap: usize },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Headings of `k` extra views spread evenly over the circle, skipping the
/// original heading.
pub fn rotation_headings(origin: f64, k: usize) -> Vec<f64> {
    let step = 360.0 / (k as f64 + 1.0);
    (1..=k)
        .map(|i| crate::world::normalize_heading(origin + i as f64 * step))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredView {
    pub observation: Observation,
    pub result: RelevanceResult,
}

impl ScoredView {
    pub fn score(&self) -> f64 {
        self.result.score
    }
}

/// Auxiliary views taken from one pose, in rotation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub origin_pose: Pose,
    pub views: Vec<ScoredView>,
}

impl ViewSet {
    /// Sensing steps spent on this set.
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Rotates in place and scores `cfg.view_budget` extra views. Time does not
/// advance, so people stay where they were for the original view.
pub fn collect_views(
    world: &World,
    pose: &Pose,
    question: &Question,
    provider: &dyn RelevanceProvider,
    ctx: &ScoreContext,
    cfg: &RefineConfig,
    sensor: &Sensor,
) -> Result<ViewSet, RefineError> {
    if cfg.view_budget > cfg.sensing_budget || cfg.view_budget == 0 {
        return Err(RefineError::BudgetExceeded {
            requested: cfg.view_budget,
            cap: cfg.sensing_budget,
        });
    }
    world.check_pose(pose)?;
    let mut views = Vec::with_capacity(cfg.view_budget);
    for heading in rotation_headings(pose.heading, cfg.view_budget) {
        let observation = observe(world, &pose.with_heading(heading), sensor)?;
        let result = provider.score(&observation, question, ctx)?;
        views.push(ScoredView {
            observation,
            result,
        });
    }
    Ok(ViewSet {
        origin_pose: *pose,
        views,
    })
}

/// Where the verified view came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSource {
    Original,
    /// Index into the view set.
    Rotation(usize),
}

/// Picks the highest-scoring candidate. Candidates are the original view
/// (when `include_original`) followed by the rotations; ties keep the
/// earliest. Returns `None` only for an empty candidate list.
pub fn select_verified(
    views: &ViewSet,
    original: (&Observation, f64),
    include_original: bool,
) -> Option<(ViewSource, f64)> {
    let mut best: Option<(ViewSource, f64)> = include_original.then_some((ViewSource::Original, original.1));
    for (i, v) in views.views.iter().enumerate() {
        match best {
            Some((_, s)) if v.score() <= s => {}
            _ => best = Some((ViewSource::Rotation(i), v.score())),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Cell, Sighting};
    use proptest::prelude::*;

    fn result(s: f64) -> RelevanceResult {
        RelevanceResult::new(s)
    }

    #[test]
    fn band_examples() {
        let cfg = RefineConfig::default();
        assert!(should_refine(&result(0.70), &cfg));
        assert!(!should_refine(&result(0.85), &cfg));
        assert!(should_refine(&result(0.60), &cfg));
        let gated = RefineConfig {
            region_gating_enabled: true,
            ..RefineConfig::default()
        };
        assert!(!should_refine(&RelevanceResult::with_region(0.70, 0.10), &gated));
        assert_eq!(classify(&RelevanceResult::with_region(0.70, 0.10), &gated), Trigger::RegionSuppressed);
        assert!(should_refine(&RelevanceResult::with_region(0.70, 0.5), &gated));
        assert_eq!(classify(&result(0.70), &gated), Trigger::GatingSkipped);
    }

    #[test]
    fn band_edges() {
        let cfg = RefineConfig::default();
        let got: Vec<Trigger> = [0.59, 0.60, 0.79, 0.80, 0.81]
            .iter()
            .map(|s| classify(&result(*s), &cfg))
            .collect();
        use Trigger::*;
        assert_eq!(got, vec![Skip, Refine, Refine, AdmitCandidate, AdmitCandidate]);
    }

    #[test]
    fn headings_are_evenly_spread() {
        assert_eq!(rotation_headings(0.0, 3), vec![90.0, 180.0, 270.0]);
        assert_eq!(rotation_headings(0.0, 1), vec![180.0]);
        assert_eq!(rotation_headings(270.0, 3), vec![0.0, 90.0, 180.0]);
        assert_eq!(rotation_headings(90.0, 2), vec![210.0, 330.0]);
    }

    #[test]
    fn config_validation() {
        assert!(RefineConfig::default().validate().is_ok());
        let bad = RefineConfig {
            view_budget: 5,
            ..RefineConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Validation { field, .. }) if field == "refine.view_budget"));
        let bad = RefineConfig {
            tau_rot: 0.8,
            ..RefineConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Validation { field, .. }) if field == "refine.tau_rot"));
    }

    fn view(score: f64, heading: f64) -> ScoredView {
        let pose = Pose::new(Cell::new(1, 1), heading, 0);
        ScoredView {
            observation: Observation {
                id: Observation::id_for(&pose),
                pose,
                visible: vec![Sighting {
                    id: "x".into(),
                    category: "c".into(),
                    detail: None,
                    cell: Cell::new(2, 1),
                }],
                occluded_ids: vec![],
            },
            result: result(score),
        }
    }

    fn set(scores: &[f64]) -> ViewSet {
        let views = scores
            .iter()
            .enumerate()
            .map(|(i, s)| view(*s, 90.0 * (i + 1) as f64))
            .collect();
        ViewSet {
            origin_pose: Pose::new(Cell::new(1, 1), 0.0, 0),
            views,
        }
    }

    #[test]
    fn selection_examples() {
        let orig = view(0.5, 0.0).observation;
        assert_eq!(
            select_verified(&set(&[0.2, 0.9, 0.4]), (&orig, 0.5), true),
            Some((ViewSource::Rotation(1), 0.9))
        );
        assert_eq!(
            select_verified(&set(&[0.5, 0.5, 0.5]), (&orig, 0.5), true),
            Some((ViewSource::Original, 0.5))
        );
        assert_eq!(
            select_verified(&set(&[0.9, 0.9]), (&orig, 0.3), true),
            Some((ViewSource::Rotation(0), 0.9))
        );
        // without the original, the best rotation wins even if worse
        assert_eq!(
            select_verified(&set(&[0.1, 0.2]), (&orig, 0.7), false),
            Some((ViewSource::Rotation(1), 0.2))
        );
        assert_eq!(select_verified(&set(&[]), (&orig, 0.7), false), None);
    }

    /// Independent argmax: first index of the maximum.
    fn first_argmax(scores: &[f64]) -> usize {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        scores.iter().position(|s| *s == max).unwrap()
    }

    proptest! {
        #[test]
        fn selection_matches_first_argmax(orig in 0.0..1.0f64, views in prop::collection::vec(prop::sample::select(vec![0.1, 0.3, 0.5, 0.7, 0.9]), 1..4)) {
            let o = view(orig, 0.0).observation;
            let mut all = vec![orig];
            all.extend(&views);
            let (src, _) = select_verified(&set(&views), (&o, orig), true).unwrap();
            let idx = match src { ViewSource::Original => 0, ViewSource::Rotation(i) => i + 1 };
            prop_assert_eq!(idx, first_argmax(&all));
        }

        #[test]
        fn selection_invariant_under_monotone_maps(orig in 0.0..1.0f64, views in prop::collection::vec(0.0..1.0f64, 1..4)) {
            let o = view(orig, 0.0).observation;
            let plain = select_verified(&set(&views), (&o, orig), true).unwrap().0;
            let f = |s: f64| (3.0 * s).exp() - 7.0;
            let mapped: Vec<f64> = views.iter().map(|s| f(*s)).collect();
            let warped = select_verified(&set(&mapped), (&o, f(orig)), true).unwrap().0;
            prop_assert_eq!(plain, warped);
        }

        #[test]
        fn trigger_partition(s in 0.0..=1.0f64) {
            let cfg = RefineConfig::default();
            let t = classify(&result(s), &cfg);
            let expected = if s < 0.6 { Trigger::Skip } else if s < 0.8 { Trigger::Refine } else { Trigger::AdmitCandidate };
            prop_assert_eq!(t, expected);
        }
    }
}
