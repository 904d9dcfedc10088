use std::collections::{BTreeMap, BTreeSet};

use crate::world::{Cell, Occupancy, Scan};

/// What the agent has mapped so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationState {
    width: i32,
    height: i32,
    occupancy: Vec<Occupancy>,
    pub visited: BTreeSet<Cell>,
    /// Remaining cells of the path being followed, next step first.
    pub current_path: Option<Vec<Cell>>,
    /// Best relevance score seen per agent cell, with the closest entity
    /// that view showed.
    pub(crate) best_views: BTreeMap<Cell, (f64, Option<Cell>)>,
    /// Goal cells already reached by goal-directed exploration.
    pub(crate) reached_goals: BTreeSet<Cell>,
}

impl ExplorationState {
    pub fn new(width: i32, height: i32) -> Self {
        ExplorationState {
            width,
            height,
            occupancy: vec![Occupancy::Unknown; (width * height) as usize],
            visited: BTreeSet::new(),
            current_path: None,
            best_views: BTreeMap::new(),
            reached_goals: BTreeSet::new(),
        }
    }

    fn index(&self, c: Cell) -> Option<usize> {
        (c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height)
            .then(|| (c.y * self.width + c.x) as usize)
    }

    /// Out-of-bounds cells read as walls.
    pub fn occupancy(&self, c: Cell) -> Occupancy {
        self.index(c).map_or(Occupancy::Wall, |i| self.occupancy[i])
    }

    pub fn set(&mut self, c: Cell, value: Occupancy) {
        if let Some(i) = self.index(c) {
            self.occupancy[i] = value;
        }
    }

    pub fn is_known_free(&self, c: Cell) -> bool {
        self.occupancy(c) == Occupancy::Free
    }

    pub fn integrate(&mut self, scan: &Scan) {
        for c in &scan.free {
            self.set(*c, Occupancy::Free);
        }
        for c in &scan.walls {
            self.set(*c, Occupancy::Wall);
        }
    }

    pub fn visit(&mut self, c: Cell) {
        self.set(c, Occupancy::Free);
        self.visited.insert(c);
    }

    /// A known-free cell with at least one unknown 4-neighbour.
    pub fn is_frontier(&self, c: Cell) -> bool {
        self.is_known_free(c)
            && c
                .neighbours4()
                .iter()
                .any(|n| self.occupancy(*n) == Occupancy::Unknown)
    }

    pub fn frontier(&self) -> BTreeSet<Cell> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| Cell::new(x, y)))
            .filter(|c| self.is_frontier(*c))
            .collect()
    }

    pub fn known_free_count(&self) -> usize {
        self.occupancy.iter().filter(|o| **o == Occupancy::Free).count()
    }
}
