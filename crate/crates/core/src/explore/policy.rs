use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::ExplorationState;
use crate::rng::Stream;
use crate::world::{bfs_nearest, Cell, Observation, Occupancy, Pose, World};

/// Exploration backbone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    /// Random walk over free neighbours.
    Re,
    /// Head for the most relevant thing seen so far, else explore frontiers.
    Goe,
    /// Nearest frontier first.
    #[default]
    Fbe,
}

impl Backbone {
    pub const ALL: [Backbone; 3] = [Backbone::Re, Backbone::Goe, Backbone::Fbe];

    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Re => "re",
            Backbone::Goe => "goe",
            Backbone::Fbe => "fbe",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backbone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Backbone::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown backbone {s:?} (expected re, goe or fbe)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Action {
    MoveTo { cell: Cell },
    RotateInPlace { heading: f64 },
    Stop,
}

/// What a policy sees at one waypoint.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    /// Used only for collision checks by the random walk.
    pub world: &'a World,
    pub pose: &'a Pose,
    pub observation: &'a Observation,
    pub score: f64,
}

/// Minimum score for a view to attract goal-directed exploration.
pub const GOAL_SCORE: f64 = 0.5;

/// Chooses the next action. The occupancy map in `state` must already
/// include the current view.
pub fn next_action(
    backbone: Backbone,
    input: &PolicyInput,
    state: &mut ExplorationState,
    rng: &mut Stream,
) -> Action {
    remember_view(input, state);
    match backbone {
        Backbone::Re => random_step(input, rng),
        Backbone::Fbe => frontier_step(input.pose, state),
        Backbone::Goe => goal_step(input.pose, state).unwrap_or_else(|| frontier_step(input.pose, state)),
    }
}

fn remember_view(input: &PolicyInput, state: &mut ExplorationState) {
    let here = input.pose.cell();
    let nearest = input
        .observation
        .visible
        .iter()
        .map(|s| s.cell)
        .min_by_key(|c| (c.manhattan(here), c.row_major()));
    let entry = state.best_views.entry(here).or_insert((f64::NEG_INFINITY, None));
    if input.score > entry.0 {
        *entry = (input.score, nearest);
    }
}

fn random_step(input: &PolicyInput, rng: &mut Stream) -> Action {
    let options: Vec<Cell> = input
        .pose
        .cell()
        .neighbours4()
        .into_iter()
        .filter(|c| input.world.is_free(*c))
        .collect();
    match options.choose(rng) {
        Some(&cell) => Action::MoveTo { cell },
        None => Action::Stop,
    }
}

fn frontier_step(pose: &Pose, state: &mut ExplorationState) -> Action {
    if let Some(path) = state.current_path.take() {
        let ok = match (path.first(), path.last()) {
            (Some(first), Some(target)) => first.manhattan(pose.cell()) == 1 && state.is_frontier(*target),
            _ => false,
        };
        if ok {
            let next = path[0];
            state.current_path = Some(path[1..].to_vec());
            return Action::MoveTo { cell: next };
        }
    }
    let here = pose.cell();
    let Some(path) = bfs_nearest(here, |c| state.is_frontier(c), |c| state.is_known_free(c)) else {
        return Action::Stop;
    };
    if path.len() == 1 {
        // standing on a frontier cell: turn to face the unknown neighbour
        let unknown = here
            .neighbours4()
            .into_iter()
            .find(|n| state.occupancy(*n) == Occupancy::Unknown)
            .expect("frontier cell has an unknown neighbour");
        return Action::RotateInPlace {
            heading: here.heading_to(unknown),
        };
    }
    state.current_path = Some(path[2..].to_vec());
    Action::MoveTo { cell: path[1] }
}

/// Moves toward the entity shown by the best unvisited high-scoring view.
fn goal_step(pose: &Pose, state: &mut ExplorationState) -> Option<Action> {
    let here = pose.cell();
    loop {
        let goal = state
            .best_views
            .values()
            .filter(|(score, _)| *score > GOAL_SCORE)
            .filter_map(|(score, e)| e.map(|e| (*score, e)))
            .filter(|(_, e)| !state.reached_goals.contains(e))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.row_major().cmp(&a.1.row_major())))?
            .1;
        let path = bfs_nearest(here, |c| c.manhattan(goal) <= 1, |c| state.is_known_free(c));
        match path {
            Some(p) if p.len() > 1 => {
                state.current_path = None;
                return Some(Action::MoveTo { cell: p[1] });
            }
            _ => {
                state.reached_goals.insert(goal);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::world::{scan, Sensor};

    fn grid(rows: &[&str]) -> World {
        let rows = rows
            .iter()
            .map(|r| r.chars().map(|c| (c != '#').then_some(0)).collect())
            .collect();
        World::from_rows("g".into(), rows, vec!["room".into()], vec![], vec![], 10, 0).unwrap()
    }

    fn empty_obs(pose: &Pose) -> Observation {
        Observation {
            id: Observation::id_for(pose),
            pose: *pose,
            visible: vec![],
            occluded_ids: vec![],
        }
    }

    fn known(world: &World) -> ExplorationState {
        let mut s = ExplorationState::new(world.width, world.height);
        for c in world.cells() {
            s.set(c, if world.is_free(c) { Occupancy::Free } else { Occupancy::Wall });
        }
        s
    }

    #[test]
    fn fully_mapped_means_stop() {
        let w = grid(&["#####", "#...#", "#####"]);
        let mut s = known(&w);
        let pose = Pose::new(Cell::new(1, 1), 0.0, 0);
        let input = PolicyInput {
            world: &w,
            pose: &pose,
            observation: &empty_obs(&pose),
            score: 0.0,
        };
        assert_eq!(next_action(Backbone::Fbe, &input, &mut s, &mut stream(0, "policy")), Action::Stop);
    }

    /// 6x6 map with an open 4x4 interior, agent at (1,1). Two boundary
    /// cells are still unknown: (5,1) makes (4,1) a frontier at BFS
    /// distance 3, (3,5) makes (3,4) a frontier at distance 5.
    #[test]
    fn nearer_frontier_wins() {
        let w = grid(&["######", "#....#", "#....#", "#....#", "#....#", "######"]);
        let mut s = known(&w);
        s.set(Cell::new(5, 1), Occupancy::Unknown);
        s.set(Cell::new(3, 5), Occupancy::Unknown);
        assert_eq!(s.frontier().len(), 2);
        let pose = Pose::new(Cell::new(1, 1), 90.0, 0);
        let input = PolicyInput {
            world: &w,
            pose: &pose,
            observation: &empty_obs(&pose),
            score: 0.0,
        };
        let a = next_action(Backbone::Fbe, &input, &mut s, &mut stream(0, "p"));
        assert_eq!(a, Action::MoveTo { cell: Cell::new(2, 1) });
        assert_eq!(s.current_path, Some(vec![Cell::new(3, 1), Cell::new(4, 1)]));
    }

    #[test]
    fn random_walk_is_reproducible() {
        let w = grid(&["#######", "#.....#", "#.....#", "#.....#", "#######"]);
        let run = || {
            let mut rng = stream(7, "policy");
            let mut s = known(&w);
            let mut pose = Pose::new(Cell::new(3, 2), 0.0, 0);
            let mut seq = Vec::new();
            for _ in 0..20 {
                let input = PolicyInput {
                    world: &w,
                    pose: &pose,
                    observation: &empty_obs(&pose),
                    score: 0.0,
                };
                let a = next_action(Backbone::Re, &input, &mut s, &mut rng);
                if let Action::MoveTo { cell } = a {
                    pose = Pose::new(cell, 0.0, 0);
                }
                seq.push(a);
            }
            seq
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|x| matches!(x, Action::MoveTo { .. })));
    }

    #[test]
    fn boxed_in_random_walk_stops() {
        let w = grid(&["###", "#.#", "###"]);
        let pose = Pose::new(Cell::new(1, 1), 0.0, 0);
        let input = PolicyInput {
            world: &w,
            pose: &pose,
            observation: &empty_obs(&pose),
            score: 0.0,
        };
        let mut s = known(&w);
        assert_eq!(next_action(Backbone::Re, &input, &mut s, &mut stream(1, "p")), Action::Stop);
    }

    #[test]
    fn standing_on_frontier_turns_toward_unknown() {
        let w = grid(&["#####", "#...#", "#####"]);
        let mut s = known(&w);
        s.set(Cell::new(1, 1), Occupancy::Free);
        s.set(Cell::new(2, 1), Occupancy::Unknown);
        let pose = Pose::new(Cell::new(1, 1), 180.0, 0);
        let input = PolicyInput {
            world: &w,
            pose: &pose,
            observation: &empty_obs(&pose),
            score: 0.0,
        };
        assert_eq!(
            next_action(Backbone::Fbe, &input, &mut s, &mut stream(0, "p")),
            Action::RotateInPlace { heading: 0.0 }
        );
        // the next look reveals it
        let sc = scan(&w, &Pose::new(Cell::new(1, 1), 0.0, 0), &Sensor::default()).unwrap();
        s.integrate(&sc);
        assert_eq!(s.occupancy(Cell::new(2, 1)), Occupancy::Free);
    }

    #[test]
    fn goal_directed_approaches_relevant_entity() {
        let w = grid(&["########", "#......#", "########"]);
        let mut s = known(&w);
        let pose = Pose::new(Cell::new(1, 1), 0.0, 0);
        let mut obs = empty_obs(&pose);
        obs.visible.push(crate::world::Sighting {
            id: "o".into(),
            category: "cup".into(),
            detail: Some("color=red".into()),
            cell: Cell::new(6, 1),
        });
        let input = PolicyInput {
            world: &w,
            pose: &pose,
            observation: &obs,
            score: 0.9,
        };
        assert_eq!(
            next_action(Backbone::Goe, &input, &mut s, &mut stream(0, "p")),
            Action::MoveTo { cell: Cell::new(2, 1) }
        );
        // low scores fall back to frontier exploration, which stops on a
        // fully known map
        let mut s = known(&w);
        let input = PolicyInput { score: 0.4, ..input };
        assert_eq!(next_action(Backbone::Goe, &input, &mut s, &mut stream(0, "p")), Action::Stop);
    }
}
