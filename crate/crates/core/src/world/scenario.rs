//! Seeded scenario generator.
//!
//! A scenario is a walled grid of rooms joined by doors, furnished with
//! objects, plus a set of questions. It comes in two splits sharing one
//! layout: `dynamic` with people walking around and `static` with none.
//! Every question is asked in both splits; in the dynamic split the
//! interaction and state questions are about what a person is doing, so
//! they also need that person seen up close.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::path::{bfs_distances, bfs_path};
use super::{
    Category, Cell, EvidenceRequirement, HumanTrack, Object, Question, World, WorldError,
};
use crate::config::ConfigError;
use crate::rng::{child_seed, stream, Stream};

const CATEGORIES: &[&str] = &[
    "chair", "table", "lamp", "sofa", "bed", "tv", "fridge", "stove", "sink", "plant",
    "bookshelf", "cabinet", "microwave", "laptop", "mirror", "clock", "vase", "bin", "desk",
    "oven", "kettle", "piano",
];
const COLORS: &[&str] = &["red", "blue", "green", "white", "black", "yellow", "brown", "gray"];
const MATERIALS: &[&str] = &["wood", "metal", "plastic", "glass", "fabric", "ceramic"];
const STATES: &[&str] = &["on", "off"];
const ACTIVITIES: &[&str] = &[
    "cooking", "reading", "cleaning", "typing", "watering", "eating", "folding laundry",
    "stretching",
];
const ROOM_NAMES: &[&str] = &[
    "kitchen", "living room", "bedroom", "bathroom", "office", "dining room", "hallway",
    "laundry room", "garage", "study", "nursery", "pantry",
];
const DIRECTIONS: [&str; 4] = ["north", "south", "east", "west"];

/// Largest grid side the generator accepts.
pub const MAX_GRID: i32 = 64;
/// Most people in one world.
pub const MAX_HUMANS: usize = 8;
/// Most objects in one world.
pub const MAX_OBJECTS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub width: i32,
    pub height: i32,
    pub room_columns: usize,
    pub room_rows: usize,
    /// Total objects per world, question objects included.
    pub objects_per_world: usize,
    /// People who only walk around, in addition to one per human question.
    pub wanderers: usize,
    /// Simulated timesteps per world.
    pub horizon: u32,
    /// Length of one motion sequence; people pick a new goal at each start.
    pub sequence_len: u32,
    pub questions_per_world: usize,
    /// Total questions in a suite.
    pub question_count: usize,
    /// Chance of a door between adjacent rooms beyond those needed for
    /// connectivity.
    pub extra_door_probability: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            width: 32,
            height: 32,
            room_columns: 3,
            room_rows: 3,
            objects_per_world: 24,
            wanderers: 3,
            horizon: 120,
            sequence_len: 120,
            questions_per_world: 7,
            question_count: 200,
            extra_door_probability: 0.3,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(8..=MAX_GRID).contains(&self.width) || !(8..=MAX_GRID).contains(&self.height) {
            return Err(ConfigError::invalid("gen.width", format!("grid sides must lie in [8, {MAX_GRID}]")));
        }
        if self.room_columns == 0 || self.room_rows == 0 {
            return Err(ConfigError::invalid("gen.room_columns", "need at least one room"));
        }
        if (self.width - 1) / (self.room_columns as i32) < 4 || (self.height - 1) / (self.room_rows as i32) < 4 {
            return Err(ConfigError::invalid("gen.room_columns", "rooms must be at least 3 cells wide"));
        }
        if self.objects_per_world > MAX_OBJECTS {
            return Err(ConfigError::invalid("gen.objects_per_world", format!("must be <= {MAX_OBJECTS}")));
        }
        if self.wanderers > MAX_HUMANS {
            return Err(ConfigError::invalid("gen.wanderers", format!("must be <= {MAX_HUMANS}")));
        }
        if self.horizon == 0 || self.sequence_len == 0 {
            return Err(ConfigError::invalid("gen.horizon", "must be >= 1"));
        }
        if self.questions_per_world == 0 {
            return Err(ConfigError::invalid("gen.questions_per_world", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.extra_door_probability) {
            return Err(ConfigError::invalid("gen.extra_door_probability", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Which variant of a paired scenario an episode runs in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Dynamic,
    Static,
}

impl Split {
    pub const BOTH: [Split; 2] = [Split::Dynamic, Split::Static];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Dynamic => "dynamic",
            Split::Static => "static",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One question in both of its forms. Both share the same id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedQuestion {
    pub dynamic: Question,
    #[serde(rename = "static")]
    pub static_question: Question,
}

impl PairedQuestion {
    pub fn id(&self) -> &str {
        &self.dynamic.id
    }

    pub fn get(&self, split: Split) -> &Question {
        match split {
            Split::Dynamic => &self.dynamic,
            Split::Static => &self.static_question,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dynamic: World,
    pub static_world: World,
    pub questions: Vec<PairedQuestion>,
}

impl Scenario {
    pub fn world(&self, split: Split) -> &World {
        match split {
            Split::Dynamic => &self.dynamic,
            Split::Static => &self.static_world,
        }
    }

    /// Checks pairing and the multi-view requirement of every question.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.static_world != self.dynamic.without_humans() {
            return Err(WorldError::InvalidWorld(format!(
                "static variant of {} differs from its dynamic layout",
                self.dynamic.id
            )));
        }
        for q in &self.questions {
            if q.dynamic.id != q.static_question.id {
                return Err(WorldError::InvalidWorld(format!("question pair {} has mismatched ids", q.id())));
            }
            for split in Split::BOTH {
                let question = q.get(split);
                let world = self.world(split);
                question.check_multi_view(world)?;
                for r in &question.required_evidence {
                    if world.object(&r.entity).is_none() && world.human(&r.entity).is_none() {
                        return Err(WorldError::InvalidWorld(format!(
                            "{} needs unknown entity {}",
                            question.id, r.entity
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub seed: u64,
    pub gen: GenConfig,
    pub scenarios: Vec<Scenario>,
}

impl Suite {
    pub fn question_count(&self) -> usize {
        self.scenarios.iter().map(|s| s.questions.len()).sum()
    }
}

/// One world with `gen.questions_per_world` questions, categories in
/// round-robin order.
pub fn generate_scenario(gen: &GenConfig, seed: u64) -> Result<Scenario, WorldError> {
    gen.validate().map_err(|e| WorldError::UnsatisfiableConstraints(e.to_string()))?;
    let categories: Vec<Category> = (0..gen.questions_per_world)
        .map(|i| Category::ALL[i % Category::ALL.len()])
        .collect();
    build_scenario(gen, seed, "w000", &categories)
}

/// `gen.question_count` questions spread over as many worlds as needed.
/// Categories rotate across the whole suite, so any 7 consecutive
/// questions cover all of them.
pub fn generate_suite(gen: &GenConfig, seed: u64) -> Result<Suite, WorldError> {
    gen.validate().map_err(|e| WorldError::UnsatisfiableConstraints(e.to_string()))?;
    let mut scenarios = Vec::new();
    let mut next = 0usize;
    let mut world_index = 0usize;
    while next < gen.question_count {
        let n = gen.questions_per_world.min(gen.question_count - next);
        let categories: Vec<Category> = (next..next + n)
            .map(|i| Category::ALL[i % Category::ALL.len()])
            .collect();
        let id = format!("w{world_index:03}");
        let world_seed = child_seed(seed, &format!("world/{world_index}"));
        scenarios.push(build_scenario(gen, world_seed, &id, &categories)?);
        next += n;
        world_index += 1;
    }
    Ok(Suite {
        seed,
        gen: gen.clone(),
        scenarios,
    })
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

impl Rect {
    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| Cell::new(x, y)))
    }
}

struct Layout {
    rows: Vec<Vec<Option<u16>>>,
    labels: Vec<String>,
    rooms: Vec<Rect>,
    doors: BTreeSet<Cell>,
}

fn boundaries(extent: i32, parts: usize) -> Vec<i32> {
    (0..=parts as i32).map(|i| i * (extent - 1) / parts as i32).collect()
}

fn build_layout(gen: &GenConfig, rng: &mut Stream) -> Layout {
    let xs = boundaries(gen.width, gen.room_columns);
    let ys = boundaries(gen.height, gen.room_rows);
    let mut rows = vec![vec![None; gen.width as usize]; gen.height as usize];
    let mut rooms = Vec::new();
    for r in 0..gen.room_rows {
        for c in 0..gen.room_columns {
            let rect = Rect {
                x0: xs[c] + 1,
                y0: ys[r] + 1,
                x1: xs[c + 1] - 1,
                y1: ys[r + 1] - 1,
            };
            for cell in rect.cells() {
                rows[cell.y as usize][cell.x as usize] = Some(rooms.len() as u16);
            }
            rooms.push(rect);
        }
    }

    let mut names: Vec<&str> = ROOM_NAMES.to_vec();
    names.shuffle(rng);
    let labels = (0..rooms.len())
        .map(|i| names.get(i).map_or_else(|| format!("room {i}"), |n| n.to_string()))
        .collect();

    // adjacency edges (a, b, horizontal neighbour?)
    let cols = gen.room_columns;
    let mut edges = Vec::new();
    for r in 0..gen.room_rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1, true));
            }
            if r + 1 < gen.room_rows {
                edges.push((i, i + cols, false));
            }
        }
    }
    edges.shuffle(rng);
    let mut component: Vec<usize> = (0..rooms.len()).collect();
    fn find(c: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while c[i] != i {
            c[i] = c[c[i]];
            i = c[i];
        }
        i
    }
    let mut doors = BTreeSet::new();
    for (a, b, horizontal) in edges {
        let (ra, rb) = (find(&mut component, a), find(&mut component, b));
        let needed = ra != rb;
        if needed {
            component[ra] = rb;
        }
        if !needed && !rng.random_bool(gen.extra_door_probability) {
            continue;
        }
        let (ka, kb) = (rooms[a], rooms[b]);
        let cells: Vec<Cell> = if horizontal {
            let x = ka.x1 + 1;
            let y = rng.random_range(ka.y0 + 1..ka.y1);
            vec![Cell::new(x, y), Cell::new(x, y + 1)]
        } else {
            let y = ka.y1 + 1;
            let x = rng.random_range(ka.x0 + 1..ka.x1);
            vec![Cell::new(x, y), Cell::new(x + 1, y)]
        };
        debug_assert!(kb.x0 <= cells[0].x + 1 && kb.y0 <= cells[0].y + 1);
        for cell in cells {
            rows[cell.y as usize][cell.x as usize] = Some(a as u16);
            doors.insert(cell);
        }
    }
    Layout {
        rows,
        labels,
        rooms,
        doors,
    }
}

struct Builder<'a> {
    gen: &'a GenConfig,
    layout: Layout,
    objects: Vec<Object>,
    /// Cells no further object may use.
    reserved: BTreeSet<Cell>,
    room_categories: Vec<BTreeSet<&'static str>>,
    tied: Vec<(String, Vec<Cell>, &'static str)>,
}

impl<'a> Builder<'a> {
    fn is_free(&self, c: Cell) -> bool {
        c.x >= 0
            && c.y >= 0
            && c.x < self.gen.width
            && c.y < self.gen.height
            && self.layout.rows[c.y as usize][c.x as usize].is_some()
    }

    fn placeable(&self, room: usize) -> Vec<Cell> {
        self.layout.rooms[room]
            .cells()
            .filter(|c| !self.reserved.contains(c))
            .filter(|c| c.neighbours4().iter().all(|n| !self.layout.doors.contains(n)))
            .collect()
    }

    fn fresh_category(&self, room: usize, rng: &mut Stream) -> Option<&'static str> {
        let options: Vec<&'static str> = CATEGORIES
            .iter()
            .copied()
            .filter(|c| !self.room_categories[room].contains(c))
            .collect();
        options.choose(rng).copied()
    }

    fn add_object(&mut self, room: usize, category: &'static str, cell: Cell, rng: &mut Stream) -> Object {
        let attributes = BTreeMap::from([
            ("color".to_string(), COLORS.choose(rng).unwrap().to_string()),
            ("material".to_string(), MATERIALS.choose(rng).unwrap().to_string()),
            ("state".to_string(), STATES.choose(rng).unwrap().to_string()),
        ]);
        let object = Object {
            id: format!("o{}", self.objects.len()),
            category: category.to_string(),
            attributes,
            cell,
        };
        self.reserved.insert(cell);
        self.room_categories[room].insert(category);
        self.objects.push(object.clone());
        object
    }

    /// A single object with a category unique in its room. With `anchor`,
    /// it also needs a free neighbouring cell for a person to stand on.
    fn single(&mut self, room: usize, anchor: bool, rng: &mut Stream) -> Option<(Object, Vec<Cell>)> {
        let category = self.fresh_category(room, rng)?;
        let mut cells = self.placeable(room);
        cells.shuffle(rng);
        for cell in cells {
            let spots: Vec<Cell> = cell
                .neighbours4()
                .into_iter()
                .filter(|n| self.is_free(*n) && !self.reserved.contains(n) && !self.layout.doors.contains(n))
                .collect();
            if anchor && spots.len() < 2 {
                continue;
            }
            let o = self.add_object(room, category, cell, rng);
            if anchor {
                self.reserved.extend(spots.iter().copied());
            }
            return Some((o, spots));
        }
        None
    }

    /// Two objects in distinct cells of one room, neither on the same row
    /// nor diagonal, so a compass direction between them is unambiguous.
    fn pair(&mut self, room: usize, rng: &mut Stream) -> Option<(Object, Object)> {
        let mut cells = self.placeable(room);
        cells.shuffle(rng);
        for &a in &cells {
            for &b in &cells {
                let (dx, dy) = ((a.x - b.x).abs(), (a.y - b.y).abs());
                if a == b || dx == dy || a.manhattan(b) < 2 || a.manhattan(b) > 5 {
                    continue;
                }
                let ca = self.fresh_category(room, rng)?;
                let oa = self.add_object(room, ca, a, rng);
                let cb = self.fresh_category(room, rng)?;
                let ob = self.add_object(room, cb, b, rng);
                return Some((oa, ob));
            }
        }
        None
    }

    fn cluster(&mut self, room: usize, n: usize, rng: &mut Stream) -> Option<Vec<Object>> {
        let category = self.fresh_category(room, rng)?;
        let mut cells = self.placeable(room);
        cells.shuffle(rng);
        let mut chosen: Vec<Cell> = Vec::new();
        for c in cells {
            if chosen.iter().all(|p| p.manhattan(c) >= 2) {
                chosen.push(c);
                if chosen.len() == n {
                    break;
                }
            }
        }
        if chosen.len() < n {
            return None;
        }
        Some(chosen.into_iter().map(|c| self.add_object(room, category, c, rng)).collect())
    }

    fn room_label(&self, room: usize) -> &str {
        &self.layout.labels[room]
    }
}

fn require(entity: &str, n: u32) -> EvidenceRequirement {
    EvidenceRequirement {
        entity: entity.to_string(),
        min_viewpoints: n,
    }
}

fn compass(from: Cell, to: Cell) -> &'static str {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    if dx.abs() > dy.abs() {
        if dx > 0 {
            "east"
        } else {
            "west"
        }
    } else if dy > 0 {
        "south"
    } else {
        "north"
    }
}

fn plural(category: &str) -> String {
    if category.ends_with('s') || category.ends_with('h') {
        format!("{category}es")
    } else {
        format!("{category}s")
    }
}

fn color_choices(answer: &str, rng: &mut Stream) -> Vec<String> {
    let mut others: Vec<&str> = COLORS.iter().copied().filter(|c| *c != answer).collect();
    others.shuffle(rng);
    let mut v: Vec<String> = others.into_iter().take(3).map(String::from).collect();
    v.push(answer.to_string());
    v.shuffle(rng);
    v
}

struct Draft {
    category: Category,
    dynamic: (String, String, Vec<EvidenceRequirement>, Option<Vec<String>>),
    static_: (String, String, Vec<EvidenceRequirement>, Option<Vec<String>>),
    region: String,
    person: Option<String>,
}

fn draft(b: &mut Builder, category: Category, rng: &mut Stream) -> Option<Draft> {
    let room = rng.random_range(0..b.layout.rooms.len());
    let label = b.room_label(room).to_string();
    let same = |text: String, answer: String, ev: Vec<EvidenceRequirement>, ch: Option<Vec<String>>| Draft {
        category,
        dynamic: (text.clone(), answer.clone(), ev.clone(), ch.clone()),
        static_: (text, answer, ev, ch),
        region: label.clone(),
        person: None,
    };
    Some(match category {
        Category::Attribute => {
            let (o, _) = b.single(room, false, rng)?;
            let color = o.attributes["color"].clone();
            let choices = color_choices(&color, rng);
            same(
                format!("What color is the {} in the {label}?", o.category),
                color,
                vec![require(&o.id, 2)],
                Some(choices),
            )
        }
        Category::Existence => {
            let (o, _) = b.single(room, false, rng)?;
            same(
                format!("Is there a {} in the {label}?", o.category),
                "yes".into(),
                vec![require(&o.id, 2)],
                Some(vec!["yes".into(), "no".into()]),
            )
        }
        Category::Counting => {
            let n = rng.random_range(2..=3);
            let objs = b.cluster(room, n, rng)?;
            same(
                format!("How many {} are in the {label}?", plural(&objs[0].category)),
                n.to_string(),
                objs.iter().map(|o| require(&o.id, 1)).collect(),
                None,
            )
        }
        Category::Location => {
            let (a, o) = b.pair(room, rng)?;
            same(
                format!("On which side of the {} is the {}?", o.category, a.category),
                compass(o.cell, a.cell).into(),
                vec![require(&a.id, 1), require(&o.id, 1)],
                Some(DIRECTIONS.iter().map(|d| d.to_string()).collect()),
            )
        }
        Category::Object => {
            let (a, o) = b.pair(room, rng)?;
            same(
                format!("What object is next to the {} in the {label}?", o.category),
                a.category.clone(),
                vec![require(&a.id, 1), require(&o.id, 1)],
                None,
            )
        }
        Category::Interaction | Category::State => {
            let (o, spots) = b.single(room, true, rng)?;
            let activity = *ACTIVITIES.choose(rng).unwrap();
            let human = format!("h{}", b.tied.len());
            b.tied.push((human.clone(), spots, activity));
            let dynamic_evidence = vec![require(&human, 1), require(&o.id, 2)];
            let static_evidence = vec![require(&o.id, 2)];
            let (dynamic, static_) = if category == Category::Interaction {
                (
                    (
                        format!("What is the person next to the {} doing?", o.category),
                        activity.to_string(),
                        dynamic_evidence,
                        None,
                    ),
                    (
                        format!("What is the {} in the {label} made of?", o.category),
                        o.attributes["material"].clone(),
                        static_evidence,
                        None,
                    ),
                )
            } else {
                (
                    (
                        format!("Is someone using the {} in the {label} right now?", o.category),
                        "yes".into(),
                        dynamic_evidence,
                        Some(vec!["yes".into(), "no".into()]),
                    ),
                    (
                        format!("Is the {} in the {label} on or off?", o.category),
                        o.attributes["state"].clone(),
                        static_evidence,
                        Some(vec!["on".into(), "off".into()]),
                    ),
                )
            };
            Draft {
                category,
                dynamic,
                static_,
                region: label,
                person: Some(human),
            }
        }
    })
}

/// A person's positions and labels over the whole horizon. Each motion
/// sequence starts by picking a goal; the person walks there one cell per
/// timestep, then stays until the next sequence.
fn track(
    id: String,
    start: Cell,
    goals: &dyn Fn(&mut Stream) -> Cell,
    idle_label: &str,
    walk_label: &str,
    wander: bool,
    world: &World,
    gen: &GenConfig,
    rng: &mut Stream,
) -> HumanTrack {
    let horizon = gen.horizon as usize;
    let mut positions = Vec::with_capacity(horizon);
    let mut labels = Vec::with_capacity(horizon);
    let mut here = start;
    let mut path: Vec<Cell> = Vec::new();
    while positions.len() < horizon {
        let t = positions.len() as u32;
        let sequence_start = t % gen.sequence_len == 0;
        if path.is_empty() && (sequence_start || wander) {
            let goal = goals(rng);
            path = bfs_path(here, goal, |c| world.is_free(c)).unwrap_or_default();
            if !path.is_empty() {
                path.remove(0);
            }
            if wander {
                // pause a little between walks
                let pause = rng.random_range(0..6);
                for _ in 0..pause {
                    if positions.len() < horizon {
                        positions.push(here);
                        labels.push(idle_label.to_string());
                    }
                }
                continue;
            }
        }
        if let Some(next) = (!path.is_empty()).then(|| path.remove(0)) {
            here = next;
            positions.push(here);
            labels.push(walk_label.to_string());
        } else {
            positions.push(here);
            labels.push(idle_label.to_string());
        }
    }
    HumanTrack {
        id,
        positions,
        activity_labels: labels,
    }
}

fn build_scenario(gen: &GenConfig, seed: u64, id: &str, categories: &[Category]) -> Result<Scenario, WorldError> {
    let tied_needed = categories
        .iter()
        .filter(|c| matches!(c, Category::Interaction | Category::State))
        .count();
    if tied_needed + gen.wanderers > MAX_HUMANS {
        return Err(WorldError::UnsatisfiableConstraints(format!(
            "{} people requested, at most {MAX_HUMANS} allowed",
            tied_needed + gen.wanderers
        )));
    }
    let mut rng = stream(seed, "scenario");
    let layout = build_layout(gen, &mut rng);
    let room_count = layout.rooms.len();
    let mut b = Builder {
        gen,
        layout,
        objects: Vec::new(),
        reserved: BTreeSet::new(),
        room_categories: vec![BTreeSet::new(); room_count],
        tied: Vec::new(),
    };

    let mut drafts = Vec::new();
    for &category in categories {
        let d = (0..64)
            .find_map(|_| draft(&mut b, category, &mut rng))
            .ok_or_else(|| {
                WorldError::UnsatisfiableConstraints(format!("cannot place evidence for a {} question", category.as_str()))
            })?;
        drafts.push(d);
    }
    if b.objects.len() > MAX_OBJECTS {
        return Err(WorldError::UnsatisfiableConstraints("too many question objects".into()));
    }
    let mut attempts = 0;
    while b.objects.len() < gen.objects_per_world && attempts < 10 * MAX_OBJECTS {
        attempts += 1;
        let room = rng.random_range(0..room_count);
        let Some(category) = b.fresh_category(room, &mut rng) else { continue };
        let cells = b.placeable(room);
        if let Some(&cell) = cells.choose(&mut rng) {
            b.add_object(room, category, cell, &mut rng);
        }
    }

    let Builder {
        layout, objects, tied, ..
    } = b;
    let bare = World::from_rows(
        id.to_string(),
        layout.rows.clone(),
        layout.labels.clone(),
        objects,
        Vec::new(),
        gen.horizon,
        seed,
    )?;

    let mut humans = Vec::new();
    for (hid, spots, activity) in &tied {
        let start = spots[0];
        let spots = spots.clone();
        let pick = move |r: &mut Stream| *spots.choose(r).unwrap();
        humans.push(track(hid.clone(), start, &pick, activity, activity, false, &bare, gen, &mut rng));
    }
    let free: Vec<Cell> = bare.free_cells().collect();
    for i in 0..gen.wanderers {
        let start = *free.choose(&mut rng).unwrap();
        let pool = free.clone();
        let pick = move |r: &mut Stream| *pool.choose(r).unwrap();
        humans.push(track(
            format!("h{}", tied.len() + i),
            start,
            &pick,
            "standing",
            "walking",
            true,
            &bare,
            gen,
            &mut rng,
        ));
    }
    let dynamic = World {
        humans,
        ..bare.clone()
    };
    dynamic.validate()?;

    let questions = drafts
        .into_iter()
        .enumerate()
        .map(|(j, d)| {
            let qid = format!("{id}-q{j}");
            let start = d.person.as_ref().and_then(|h| observation_point(&dynamic, h, &d.region, &mut rng));
            let make = |(text, answer, required_evidence, choices): (String, String, Vec<EvidenceRequirement>, Option<Vec<String>>)| Question {
                id: qid.clone(),
                world_id: id.to_string(),
                text,
                category: d.category,
                answer,
                required_evidence,
                target_region: d.region.clone(),
                choices,
                start,
            };
            PairedQuestion {
                dynamic: make(d.dynamic.clone()),
                static_question: make(d.static_.clone()),
            }
        })
        .collect();
    let scenario = Scenario {
        static_world: dynamic.without_humans(),
        dynamic,
        questions,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// A cell a short walk from where the person stands at the start, inside
/// the question's room.
fn observation_point(world: &World, person: &str, region: &str, rng: &mut Stream) -> Option<Cell> {
    let h = world.humans.iter().find(|h| h.id == person)?;
    let at = h.position(0);
    let dist = bfs_distances(at, |c| world.is_free(c));
    let cells: Vec<Cell> = world
        .region_cells(region)
        .into_iter()
        .filter(|c| dist.get(c).is_some_and(|d| (1..=2).contains(d)))
        .filter(|c| world.objects.iter().all(|o| o.cell != *c))
        .collect();
    cells.choose(rng).copied()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    seed: u64,
    gen: GenConfig,
    scenarios: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    world_id: String,
    dynamic_world: String,
    static_world: String,
    questions: String,
}

pub const MANIFEST_FILE: &str = "suite.json";

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), WorldError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `suite.json` plus one file per world variant and one question
/// file per world under `dir`.
pub fn write_suite(dir: &Path, suite: &Suite) -> Result<(), WorldError> {
    fs::create_dir_all(dir.join("worlds"))?;
    fs::create_dir_all(dir.join("questions"))?;
    let mut entries = Vec::new();
    for s in &suite.scenarios {
        let id = &s.dynamic.id;
        let entry = ManifestEntry {
            world_id: id.clone(),
            dynamic_world: format!("worlds/{id}-dynamic.json"),
            static_world: format!("worlds/{id}-static.json"),
            questions: format!("questions/{id}.json"),
        };
        write_json(&dir.join(&entry.dynamic_world), &s.dynamic)?;
        write_json(&dir.join(&entry.static_world), &s.static_world)?;
        write_json(&dir.join(&entry.questions), &s.questions)?;
        entries.push(entry);
    }
    write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest {
            format_version: 1,
            seed: suite.seed,
            gen: suite.gen.clone(),
            scenarios: entries,
        },
    )
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, WorldError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads and validates a suite written by [`write_suite`].
pub fn read_suite(dir: &Path) -> Result<Suite, WorldError> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format_version != 1 {
        return Err(WorldError::InvalidWorld(format!(
            "unsupported suite format {}",
            manifest.format_version
        )));
    }
    let mut scenarios = Vec::new();
    for e in &manifest.scenarios {
        let scenario = Scenario {
            dynamic: read_json(&dir.join(&e.dynamic_world))?,
            static_world: read_json(&dir.join(&e.static_world))?,
            questions: read_json(&dir.join(&e.questions))?,
        };
        scenario.validate()?;
        scenarios.push(scenario);
    }
    Ok(Suite {
        seed: manifest.seed,
        gen: manifest.gen,
        scenarios,
    })
}
