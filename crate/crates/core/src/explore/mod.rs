//! The agent: exploration backbones and the per-waypoint
//! sense, score, refine, admit loop.

mod episode;
mod policy;
mod state;

pub use episode::{
    run_episode, run_waypoint, Agent, Answer, Answerer, Components, EpisodeOutcome, EpisodeResult,
    ExploreError, OracleAnswerer, Variant, ViewRecord, WaypointOutcome, WaypointRecord,
};
pub use policy::{next_action, Action, Backbone, PolicyInput, GOAL_SCORE};
pub use state::ExplorationState;
