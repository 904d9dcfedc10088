use serde::{Deserialize, Serialize};

use super::los::line_clear;
use super::{Cell, Observation, Pose, Sighting, World, WorldError, HUMAN_CATEGORY};
use crate::config::{DEFAULT_FOV_DEGREES, DEFAULT_VISIBILITY_RANGE};

/// Camera geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub fov_degrees: f64,
    /// Euclidean range in cells. Activity labels are readable up to half of it.
    pub range: f64,
}

impl Default for Sensor {
    fn default() -> Self {
        Sensor {
            fov_degrees: DEFAULT_FOV_DEGREES,
            range: DEFAULT_VISIBILITY_RANGE,
        }
    }
}

/// Signed difference `to - from` wrapped into `(-180, 180]`.
pub fn angular_offset(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

impl Sensor {
    /// Range and angle test only; occlusion is separate.
    pub fn in_frustum(&self, pose: &Pose, target: Cell) -> bool {
        let origin = pose.cell();
        if target == origin || origin.distance(target) > self.range {
            return false;
        }
        angular_offset(pose.heading, origin.heading_to(target)).abs() <= self.fov_degrees / 2.0
    }

    fn sight_clear(&self, world: &World, pose: &Pose, target: Cell) -> bool {
        let t = pose.timestep;
        line_clear(pose.cell(), target, |c| world.is_wall(c) || world.has_human_at(c, t))
    }
}

/// What the agent sees from `pose`.
///
/// An entity is visible when its cell is inside the frustum and the
/// supercover line to it crosses no wall and no cell occupied by a person at
/// `pose.timestep`. People hide whatever is behind them but are visible
/// themselves.
pub fn observe(world: &World, pose: &Pose, sensor: &Sensor) -> Result<Observation, WorldError> {
    world.check_pose(pose)?;
    let t = pose.timestep;
    let origin = pose.cell();
    let mut visible = Vec::new();
    let mut occluded_ids = Vec::new();

    for o in &world.objects {
        if !sensor.in_frustum(pose, o.cell) {
            continue;
        }
        if sensor.sight_clear(world, pose, o.cell) {
            visible.push(Sighting {
                id: o.id.clone(),
                category: o.category.clone(),
                detail: Some(o.describe()),
                cell: o.cell,
            });
        } else {
            occluded_ids.push(o.id.clone());
        }
    }
    for h in &world.humans {
        let cell = h.position(t);
        if !sensor.in_frustum(pose, cell) {
            continue;
        }
        if sensor.sight_clear(world, pose, cell) {
            let readable = origin.distance(cell) <= sensor.range / 2.0;
            visible.push(Sighting {
                id: h.id.clone(),
                category: HUMAN_CATEGORY.into(),
                detail: readable.then(|| h.activity(t).to_owned()),
                cell,
            });
        } else {
            occluded_ids.push(h.id.clone());
        }
    }

    Ok(Observation {
        id: Observation::id_for(pose),
        pose: *pose,
        visible,
        occluded_ids,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Unknown,
    Free,
    Wall,
}

/// Cells revealed by one look, for occupancy mapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scan {
    pub free: Vec<Cell>,
    pub walls: Vec<Cell>,
}

/// Every cell whose sight line from `pose` is clear, split into free and
/// wall cells. The agent's own cell is always reported free.
pub fn scan(world: &World, pose: &Pose, sensor: &Sensor) -> Result<Scan, WorldError> {
    world.check_pose(pose)?;
    let origin = pose.cell();
    let r = sensor.range.ceil() as i32;
    let mut out = Scan {
        free: vec![origin],
        walls: Vec::new(),
    };
    for y in (origin.y - r)..=(origin.y + r) {
        for x in (origin.x - r)..=(origin.x + r) {
            let c = Cell::new(x, y);
            if !world.in_bounds(c) || !sensor.in_frustum(pose, c) {
                continue;
            }
            if !sensor.sight_clear(world, pose, c) {
                continue;
            }
            if world.is_wall(c) {
                out.walls.push(c);
            } else {
                out.free.push(c);
            }
        }
    }
    Ok(out)
}

/// Per-episode simulation clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldClock {
    timestep: u32,
    horizon: u32,
}

impl WorldClock {
    pub fn new(horizon: u32) -> Self {
        WorldClock {
            timestep: 0,
            horizon,
        }
    }

    pub fn starting_at(timestep: u32, horizon: u32) -> Self {
        WorldClock { timestep, horizon }
    }

    pub fn now(&self) -> u32 {
        self.timestep
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Whether `dt` more timesteps still land on an observable time.
    pub fn can_advance(&self, dt: u32) -> bool {
        self.timestep
            .checked_add(dt)
            .is_some_and(|t| t < self.horizon)
    }

    /// Moves time forward. `dt = 0` is the in-place case used while the
    /// camera rotates: people stay exactly where they are.
    pub fn advance(&mut self, dt: u32) -> Result<u32, WorldError> {
        if !self.can_advance(dt) {
            return Err(WorldError::HorizonExceeded {
                timestep: self.timestep,
                dt,
                horizon: self.horizon,
            });
        }
        self.timestep += dt;
        Ok(self.timestep)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::world::{HumanTrack, Object};

    fn room(w: usize, h: usize) -> World {
        let rows = (0..h)
            .map(|y| {
                (0..w)
                    .map(|x| (x > 0 && y > 0 && x < w - 1 && y < h - 1).then_some(0))
                    .collect()
            })
            .collect();
        World::from_rows("t".into(), rows, vec!["room".into()], vec![], vec![], 2, 0).unwrap()
    }

    fn obj(id: &str, x: i32, y: i32) -> Object {
        Object {
            id: id.into(),
            category: "box".into(),
            attributes: BTreeMap::from([("color".into(), "blue".into())]),
            cell: Cell::new(x, y),
        }
    }

    #[test]
    fn object_behind_agent_not_visible() {
        let mut w = room(9, 5);
        w.objects.push(obj("front", 6, 2));
        w.objects.push(obj("back", 2, 2));
        let pose = Pose::new(Cell::new(4, 2), 0.0, 0);
        let o = observe(&w, &pose, &Sensor::default()).unwrap();
        assert!(o.sees("front"));
        assert!(!o.sees("back"));
        assert!(!o.occluded_ids.contains(&"back".to_string()));
    }

    /// 5x5 open grid (no border walls). Agent at (0,2) facing +x, object at
    /// (4,2). A person stands on (2,2) at t=0, which the supercover line
    /// (0,2)..(4,2) crosses; at t=1 the person has stepped to (2,1), off the
    /// line.
    #[test]
    fn person_occludes_then_steps_aside() {
        let rows = vec![vec![Some(0u16); 5]; 5];
        let objects = vec![obj("target", 4, 2)];
        let humans = vec![HumanTrack {
            id: "h1".into(),
            positions: vec![Cell::new(2, 2), Cell::new(2, 1)],
            activity_labels: vec!["walking".into(), "walking".into()],
        }];
        let w = World::from_rows("g".into(), rows, vec!["r".into()], objects, humans, 2, 0).unwrap();
        let sensor = Sensor::default();
        let t0 = observe(&w, &Pose::new(Cell::new(0, 2), 0.0, 0), &sensor).unwrap();
        assert!(!t0.sees("target"));
        assert_eq!(t0.occluded_ids, vec!["target".to_string()]);
        assert!(t0.sees("h1"), "the occluder itself is visible");
        let t1 = observe(&w, &Pose::new(Cell::new(0, 2), 0.0, 1), &sensor).unwrap();
        assert!(t1.sees("target"));
        assert!(t1.occluded_ids.is_empty());
    }

    #[test]
    fn activity_readable_only_up_close() {
        let rows = vec![vec![Some(0u16); 12]; 3];
        let humans = vec![
            HumanTrack {
                id: "near".into(),
                positions: vec![Cell::new(3, 0); 2],
                activity_labels: vec!["cooking".into(); 2],
            },
            HumanTrack {
                id: "far".into(),
                positions: vec![Cell::new(8, 1); 2],
                activity_labels: vec!["reading".into(); 2],
            },
        ];
        let w = World::from_rows("g".into(), rows, vec!["r".into()], vec![], humans, 2, 0).unwrap();
        let o = observe(&w, &Pose::new(Cell::new(1, 1), 0.0, 0), &Sensor::default()).unwrap();
        assert_eq!(o.sighting("near").unwrap().detail.as_deref(), Some("cooking"));
        assert_eq!(o.sighting("far").unwrap().detail, None);
    }

    #[test]
    fn walls_block_diagonal_grazing() {
        // wall at (1,0) and (0,1): the diagonal (0,0)->(2,2) touches both
        let rows = vec![
            vec![Some(0), None, Some(0)],
            vec![None, Some(0), Some(0)],
            vec![Some(0), Some(0), Some(0)],
        ];
        let w = World::from_rows("g".into(), rows, vec!["r".into()], vec![obj("o", 2, 2)], vec![], 1, 0)
            .unwrap();
        let o = observe(&w, &Pose::new(Cell::new(0, 0), 45.0, 0), &Sensor::default()).unwrap();
        assert!(!o.sees("o"));
        assert_eq!(o.occluded_ids, vec!["o".to_string()]);
    }

    #[test]
    fn scan_reports_walls_and_free_cells() {
        let w = room(7, 5);
        let s = scan(&w, &Pose::new(Cell::new(1, 2), 0.0, 0), &Sensor::default()).unwrap();
        assert!(s.free.contains(&Cell::new(1, 2)));
        assert!(s.free.contains(&Cell::new(5, 2)));
        assert!(s.walls.contains(&Cell::new(6, 2)));
        assert!(!s.free.contains(&Cell::new(6, 2)));
    }

    #[test]
    fn clock() {
        let mut c = WorldClock::new(120);
        assert_eq!(c.advance(0).unwrap(), 0);
        for _ in 0..11 {
            c.advance(10).unwrap();
        }
        assert_eq!(c.now(), 110);
        assert!(matches!(c.advance(10), Err(WorldError::HorizonExceeded { .. })));
        assert_eq!(c.now(), 110);
    }

    #[test]
    fn offsets_wrap() {
        assert_eq!(angular_offset(350.0, 10.0), 20.0);
        assert_eq!(angular_offset(10.0, 350.0), -20.0);
        assert_eq!(angular_offset(0.0, 180.0), 180.0);
    }
}
