//! Deterministic grid world with rooms, objects and moving people.
//!
//! A [`World`] is immutable; time enters only through the `timestep` of the
//! [`Pose`] an observation is taken from. People follow precomputed tracks,
//! so what is visible at time `t` depends on nothing but the layout and `t`.

mod los;
mod observe;
mod oracle;
mod path;
pub mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use los::{line_clear, supercover};
pub use path::{bfs_distances, bfs_nearest, bfs_path};
pub use observe::{
    angular_offset, observe, scan, Occupancy, Scan, Sensor, WorldClock,
};
pub use oracle::{
    answer_oracle, evidence_fraction, heading_bucket, sighting_counts, Viewpoint, WRONG_ANSWER,
};
pub use scenario::{
    generate_scenario, generate_suite, read_suite, write_suite, GenConfig, PairedQuestion,
    Scenario, Split, Suite,
};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("timestep {timestep} outside world horizon {horizon}")]
    TimestepOutOfRange { timestep: u32, horizon: u32 },
    #[error("advancing from {timestep} by {dt} exceeds horizon {horizon}")]
    HorizonExceeded { timestep: u32, dt: u32, horizon: u32 },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("cannot satisfy scenario constraints: {0}")]
    UnsatisfiableConstraints(String),
    #[error("scenario io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// A grid cell. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn neighbours4(self) -> [Cell; 4] {
        [
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x, self.y - 1),
        ]
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn distance(self, other: Cell) -> f64 {
        let dx = (other.x - self.x) as f64;
        let dy = (other.y - self.y) as f64;
        dx.hypot(dy)
    }

    /// Row-major ordering key: lowest `y` first, then lowest `x`.
    pub fn row_major(self) -> (i32, i32) {
        (self.y, self.x)
    }

    /// Heading in degrees from `self` towards `other`; 0 is +x, 90 is +y.
    pub fn heading_to(self, other: Cell) -> f64 {
        normalize_heading(((other.y - self.y) as f64).atan2((other.x - self.x) as f64).to_degrees())
    }
}

impl From<[i32; 2]> for Cell {
    fn from(v: [i32; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Wraps any angle into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Agent position, camera heading and simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    /// Degrees in `[0, 360)`; 0 faces +x, 90 faces +y.
    pub heading: f64,
    pub timestep: u32,
}

impl Pose {
    pub fn new(cell: Cell, heading: f64, timestep: u32) -> Self {
        Pose {
            x: cell.x,
            y: cell.y,
            heading: normalize_heading(heading),
            timestep,
        }
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }

    pub fn with_heading(&self, heading: f64) -> Self {
        Pose::new(self.cell(), heading, self.timestep)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Object {
    pub id: String,
    pub category: String,
    pub attributes: BTreeMap<String, String>,
    pub cell: Cell,
}

impl Object {
    pub fn describe(&self) -> String {
        self.attributes
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// A person's position and activity at every timestep of the horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanTrack {
    pub id: String,
    pub positions: Vec<Cell>,
    pub activity_labels: Vec<String>,
}

impl HumanTrack {
    pub fn position(&self, t: u32) -> Cell {
        self.positions[t as usize]
    }

    pub fn activity(&self, t: u32) -> &str {
        &self.activity_labels[t as usize]
    }
}

pub const HUMAN_CATEGORY: &str = "person";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tile {
    Wall,
    Free(u16),
}

/// Grid layout, regions, objects and people.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldFile", into = "WorldFile")]
pub struct World {
    pub id: String,
    pub width: i32,
    pub height: i32,
    tiles: Vec<Tile>,
    region_labels: Vec<String>,
    pub objects: Vec<Object>,
    pub humans: Vec<HumanTrack>,
    /// Number of simulated timesteps; valid times are `0..horizon`.
    pub horizon: u32,
    pub seed: u64,
}

/// On-disk form of a [`World`]. The layout is one string per row: `#` is a
/// wall, any other character is a free cell whose region is looked up in
/// `regions`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub id: String,
    pub width: i32,
    pub height: i32,
    pub seed: u64,
    pub horizon: u32,
    pub layout: Vec<String>,
    pub regions: BTreeMap<char, String>,
    pub objects: Vec<Object>,
    pub humans: Vec<HumanTrack>,
}

const REGION_SYMBOLS: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

impl From<World> for WorldFile {
    fn from(w: World) -> Self {
        let symbols: Vec<char> = REGION_SYMBOLS.chars().collect();
        let layout = (0..w.height)
            .map(|y| {
                (0..w.width)
                    .map(|x| match w.tiles[(y * w.width + x) as usize] {
                        Tile::Wall => '#',
                        Tile::Free(r) => symbols[r as usize],
                    })
                    .collect()
            })
            .collect();
        let regions = w
            .region_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (symbols[i], l.clone()))
            .collect();
        WorldFile {
            id: w.id,
            width: w.width,
            height: w.height,
            seed: w.seed,
            horizon: w.horizon,
            layout,
            regions,
            objects: w.objects,
            humans: w.humans,
        }
    }
}

impl TryFrom<WorldFile> for World {
    type Error = WorldError;

    fn try_from(f: WorldFile) -> Result<Self, WorldError> {
        if f.layout.len() != f.height as usize {
            return Err(WorldError::InvalidWorld(format!(
                "layout has {} rows, expected {}",
                f.layout.len(),
                f.height
            )));
        }
        let symbols: Vec<(char, String)> = f.regions.into_iter().collect();
        let mut labels = Vec::with_capacity(symbols.len());
        let mut index = BTreeMap::new();
        for (i, (sym, label)) in symbols.iter().enumerate() {
            index.insert(*sym, i as u16);
            labels.push(label.clone());
        }
        let mut rows = Vec::with_capacity(f.height as usize);
        for (y, row) in f.layout.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            if chars.len() != f.width as usize {
                return Err(WorldError::InvalidWorld(format!("row {y} has wrong width")));
            }
            let mut tiles = Vec::with_capacity(chars.len());
            for ch in chars {
                tiles.push(match ch {
                    '#' => None,
                    c => Some(*index.get(&c).ok_or_else(|| {
                        WorldError::InvalidWorld(format!("unknown region symbol {c:?}"))
                    })?),
                });
            }
            rows.push(tiles);
        }
        World::from_rows(f.id, rows, labels, f.objects, f.humans, f.horizon, f.seed)
    }
}

impl World {
    /// Builds and validates a world. `rows[y][x]` is `None` for a wall or the
    /// index into `region_labels`.
    pub fn from_rows(
        id: String,
        rows: Vec<Vec<Option<u16>>>,
        region_labels: Vec<String>,
        objects: Vec<Object>,
        humans: Vec<HumanTrack>,
        horizon: u32,
        seed: u64,
    ) -> Result<Self, WorldError> {
        let height = rows.len() as i32;
        let width = rows.first().map_or(0, |r| r.len()) as i32;
        if width == 0 || height == 0 {
            return Err(WorldError::InvalidWorld("empty grid".into()));
        }
        if region_labels.len() > REGION_SYMBOLS.len() {
            return Err(WorldError::InvalidWorld("too many regions".into()));
        }
        let mut tiles = Vec::with_capacity((width * height) as usize);
        for row in &rows {
            if row.len() != width as usize {
                return Err(WorldError::InvalidWorld("ragged grid".into()));
            }
            for t in row {
                tiles.push(match t {
                    None => Tile::Wall,
                    Some(r) if (*r as usize) < region_labels.len() => Tile::Free(*r),
                    Some(r) => {
                        return Err(WorldError::InvalidWorld(format!("region index {r} out of range")))
                    }
                });
            }
        }
        let world = World {
            id,
            width,
            height,
            tiles,
            region_labels,
            objects,
            humans,
            horizon,
            seed,
        };
        world.validate()?;
        Ok(world)
    }

    fn validate(&self) -> Result<(), WorldError> {
        if self.horizon == 0 {
            return Err(WorldError::InvalidWorld("horizon must be positive".into()));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return Err(WorldError::InvalidWorld(format!("duplicate id {}", o.id)));
            }
            if !self.is_free(o.cell) {
                return Err(WorldError::InvalidWorld(format!("object {} on blocked cell", o.id)));
            }
        }
        for h in &self.humans {
            if !ids.insert(h.id.as_str()) {
                return Err(WorldError::InvalidWorld(format!("duplicate id {}", h.id)));
            }
            if h.positions.len() != self.horizon as usize
                || h.activity_labels.len() != self.horizon as usize
            {
                return Err(WorldError::InvalidWorld(format!(
                    "track {} does not span the horizon",
                    h.id
                )));
            }
            for pair in h.positions.windows(2) {
                if pair[0].manhattan(pair[1]) > 1 {
                    return Err(WorldError::InvalidWorld(format!("track {} jumps", h.id)));
                }
            }
            if let Some(c) = h.positions.iter().find(|c| !self.is_free(**c)) {
                return Err(WorldError::InvalidWorld(format!("track {} leaves free space at {c}", h.id)));
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    fn tile(&self, c: Cell) -> Option<Tile> {
        self.in_bounds(c)
            .then(|| self.tiles[(c.y * self.width + c.x) as usize])
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        !matches!(self.tile(c), Some(Tile::Free(_)))
    }

    pub fn is_free(&self, c: Cell) -> bool {
        matches!(self.tile(c), Some(Tile::Free(_)))
    }

    pub fn region_of(&self, c: Cell) -> Option<&str> {
        match self.tile(c) {
            Some(Tile::Free(r)) => Some(self.region_labels[r as usize].as_str()),
            _ => None,
        }
    }

    pub fn region_labels(&self) -> &[String] {
        &self.region_labels
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|c| self.is_free(*c))
    }

    pub fn walls(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|c| self.is_wall(*c))
    }

    pub fn region_cells(&self, label: &str) -> Vec<Cell> {
        self.free_cells()
            .filter(|c| self.region_of(*c) == Some(label))
            .collect()
    }

    pub fn object(&self, id: &str) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn human(&self, id: &str) -> Option<&HumanTrack> {
        self.humans.iter().find(|h| h.id == id)
    }

    pub fn human_cells(&self, t: u32) -> impl Iterator<Item = Cell> + '_ {
        self.humans.iter().map(move |h| h.position(t))
    }

    pub fn has_human_at(&self, c: Cell, t: u32) -> bool {
        self.humans.iter().any(|h| h.position(t) == c)
    }

    /// Same layout and objects with every person removed.
    pub fn without_humans(&self) -> World {
        World {
            humans: Vec::new(),
            ..self.clone()
        }
    }

    pub fn check_pose(&self, pose: &Pose) -> Result<(), WorldError> {
        if !self.is_free(pose.cell()) {
            return Err(WorldError::InvalidPose(format!(
                "{} is not a free cell",
                pose.cell()
            )));
        }
        if !(0.0..360.0).contains(&pose.heading) {
            return Err(WorldError::InvalidPose(format!("heading {} not in [0, 360)", pose.heading)));
        }
        if pose.timestep >= self.horizon {
            return Err(WorldError::TimestepOutOfRange {
                timestep: pose.timestep,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }
}

/// Question categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Attribute,
    Counting,
    Existence,
    Interaction,
    Location,
    Object,
    State,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Attribute,
        Category::Counting,
        Category::Existence,
        Category::Interaction,
        Category::Location,
        Category::Object,
        Category::State,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Attribute => "attribute",
            Category::Counting => "counting",
            Category::Existence => "existence",
            Category::Interaction => "interaction",
            Category::Location => "location",
            Category::Object => "object",
            Category::State => "state",
        }
    }
}

/// An entity that must be seen, and from how many distinct viewpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRequirement {
    pub entity: String,
    pub min_viewpoints: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub world_id: String,
    pub text: String,
    pub category: Category,
    pub answer: String,
    pub required_evidence: Vec<EvidenceRequirement>,
    pub target_region: String,
    /// Multiple-choice options, lettered A, B, ... in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Where episodes for this question begin. Unset means anywhere in the
    /// target region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Cell>,
}

impl Question {
    /// Every question needs either one entity seen from two or more
    /// viewpoints, or two entities in different cells.
    pub fn check_multi_view(&self, world: &World) -> Result<(), WorldError> {
        if self.required_evidence.is_empty() {
            return Err(WorldError::InvalidWorld(format!("{} has no evidence", self.id)));
        }
        if self.required_evidence.iter().any(|r| r.min_viewpoints >= 2) {
            return Ok(());
        }
        let cells: BTreeSet<Cell> = self
            .required_evidence
            .iter()
            .filter_map(|r| world.object(&r.entity).map(|o| o.cell))
            .collect();
        let has_human = self
            .required_evidence
            .iter()
            .any(|r| world.human(&r.entity).is_some());
        if cells.len() >= 2 || (has_human && !cells.is_empty()) {
            Ok(())
        } else {
            Err(WorldError::InvalidWorld(format!(
                "{} does not require multiple viewpoints",
                self.id
            )))
        }
    }
}

/// One entity seen in an observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sighting {
    pub id: String,
    pub category: String,
    /// Object attributes, or a person's activity when close enough to read.
    pub detail: Option<String>,
    pub cell: Cell,
}

/// What the camera sees from one pose at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Stable identifier derived from pose and time.
    pub id: String,
    pub pose: Pose,
    pub visible: Vec<Sighting>,
    /// Entities inside the view frustum whose sight line is blocked.
    pub occluded_ids: Vec<String>,
}

impl Observation {
    pub fn id_for(pose: &Pose) -> String {
        format!(
            "obs-{}-{}-{:03}-t{}",
            pose.x,
            pose.y,
            (pose.heading * 10.0).round() as i64,
            pose.timestep
        )
    }

    pub fn sees(&self, id: &str) -> bool {
        self.visible.iter().any(|s| s.id == id)
    }

    pub fn sighting(&self, id: &str) -> Option<&Sighting> {
        self.visible.iter().find(|s| s.id == id)
    }

    /// Visible-content tokens, one per sighting field, used for embeddings.
    pub fn content_tokens(&self) -> Vec<String> {
        let mut tokens = Vec::new();
        for s in &self.visible {
            tokens.push(format!("category:{}", s.category));
            tokens.push(format!("entity:{}", s.id));
            if let Some(d) = &s.detail {
                for part in d.split(',') {
                    tokens.push(format!("detail:{part}"));
                }
            }
        }
        tokens
    }

    /// Plain-text rendering for text-only model prompts.
    pub fn describe(&self) -> String {
        if self.visible.is_empty() {
            return "nothing is visible".into();
        }
        self.visible
            .iter()
            .map(|s| match &s.detail {
                Some(d) => format!("{} {} ({d}) at {}", s.category, s.id, s.cell),
                None => format!("{} {} at {}", s.category, s.id, s.cell),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}
