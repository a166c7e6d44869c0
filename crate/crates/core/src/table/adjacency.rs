use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// Directed neighbour pairs `(left/top, right/bottom, direction)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdjacencyGraph {
    pub pairs: BTreeSet<(usize, usize, Direction)>,
}

impl AdjacencyGraph {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn of(&self, dir: Direction) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().filter(move |p| p.2 == dir).map(|p| (p.0, p.1))
    }

    pub fn contains(&self, a: usize, b: usize, dir: Direction) -> bool {
        self.pairs.contains(&(a, b, dir))
    }
}

/// Pairs of distinct cells that touch across a grid line.
pub fn adjacency(table: &Table) -> AdjacencyGraph {
    let grid = table.owner_grid();
    let mut pairs = BTreeSet::new();
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            if c + 1 < grid.cols() && grid.v_sep(r, c) {
                pairs.insert((grid.get(r, c), grid.get(r, c + 1), Direction::Horizontal));
            }
            if r + 1 < grid.rows() && grid.h_sep(r, c) {
                pairs.insert((grid.get(r, c), grid.get(r + 1, c), Direction::Vertical));
            }
        }
    }
    AdjacencyGraph { pairs }
}
