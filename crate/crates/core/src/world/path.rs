//! Breadth-first search on the 4-connected grid.

use std::collections::{HashMap, VecDeque};

use super::Cell;

/// Shortest path from `start` to the nearest cell satisfying `is_goal`,
/// moving only through `passable` cells. Among equally near goals the one
/// with the lowest `(y, x)` wins. The path includes both endpoints; a goal
/// at `start` gives a one-cell path.
pub fn bfs_nearest(
    start: Cell,
    mut is_goal: impl FnMut(Cell) -> bool,
    mut passable: impl FnMut(Cell) -> bool,
) -> Option<Vec<Cell>> {
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    parent.insert(start, start);
    let mut layer = vec![start];
    while !layer.is_empty() {
        if let Some(goal) = layer
            .iter()
            .copied()
            .filter(|c| is_goal(*c))
            .min_by_key(|c| c.row_major())
        {
            return Some(unwind(&parent, start, goal));
        }
        let mut next = Vec::new();
        for c in layer {
            for n in c.neighbours4() {
                if !parent.contains_key(&n) && passable(n) {
                    parent.insert(n, c);
                    next.push(n);
                }
            }
        }
        layer = next;
    }
    None
}

fn unwind(parent: &HashMap<Cell, Cell>, start: Cell, goal: Cell) -> Vec<Cell> {
    let mut path = vec![goal];
    let mut c = goal;
    while c != start {
        c = parent[&c];
        path.push(c);
    }
    path.reverse();
    path
}

/// Shortest path between two cells, if one exists.
pub fn bfs_path(start: Cell, goal: Cell, passable: impl FnMut(Cell) -> bool) -> Option<Vec<Cell>> {
    bfs_nearest(start, |c| c == goal, passable)
}

/// BFS distance to every reachable cell.
pub fn bfs_distances(start: Cell, mut passable: impl FnMut(Cell) -> bool) -> HashMap<Cell, u32> {
    let mut dist = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        let d = dist[&c];
        for n in c.neighbours4() {
            if !dist.contains_key(&n) && passable(n) {
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}
