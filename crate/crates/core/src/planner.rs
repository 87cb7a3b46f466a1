//! Four-connected grid search over a [`CostGrid`].
//!
//! Moving into a cell costs that cell's value; the start cell is free.
//! [`astar`] uses `h(s) = c_min * manhattan(s, goal)`, which is consistent
//! because every move costs at least `c_min`. [`dijkstra`] is a separate
//! uniform-cost search kept as an optimality oracle.
//!
//! Both searches pop in order of `(f, h, insertion sequence)`. Successors
//! are generated North, East, South, West, so the insertion sequence
//! encodes that order and breaks any remaining ties first-in first-out.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costgrid::{CostGrid, GridSpec};
use crate::format::round_sig;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("{which} cell ({row}, {col}) is outside the {rows}x{cols} grid")]
    OutOfBounds {
        which: &'static str,
        row: u32,
        col: u32,
        rows: u32,
        cols: u32,
    },
    #[error("A* needs a positive minimum cell cost for its heuristic, found {0}")]
    NonPositiveMinimum(f64),
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl From<[u32; 2]> for Cell {
    fn from([row, col]: [u32; 2]) -> Self {
        Self { row, col }
    }
}

impl From<Cell> for [u32; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

/// Grid geometry recorded alongside a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: u32,
    pub cols: u32,
    pub cell_mm: u32,
}

impl From<&GridSpec> for GridDims {
    fn from(s: &GridSpec) -> Self {
        Self {
            rows: s.rows,
            cols: s.cols,
            cell_mm: s.cell_mm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub grid: CostGrid,
    pub start: Cell,
    pub goal: Cell,
}

impl PlanProblem {
    /// Start at the bottom row, goal at the top row, both in column `cols / 2`.
    pub fn new(grid: CostGrid) -> Self {
        let start = default_start(grid.spec());
        let goal = default_goal(grid.spec());
        Self { grid, start, goal }
    }

    pub fn with_start(mut self, start: Cell) -> Self {
        self.start = start;
        self
    }

    pub fn with_goal(mut self, goal: Cell) -> Self {
        self.goal = goal;
        self
    }

    pub(crate) fn check_bounds(&self) -> Result<(), PlanError> {
        let (rows, cols) = (self.grid.rows(), self.grid.cols());
        for (which, c) in [("start", self.start), ("goal", self.goal)] {
            if c.row >= rows || c.col >= cols {
                return Err(PlanError::OutOfBounds {
                    which,
                    row: c.row,
                    col: c.col,
                    rows,
                    cols,
                });
            }
        }
        Ok(())
    }
}

pub fn default_start(spec: &GridSpec) -> Cell {
    Cell::new(spec.rows - 1, spec.cols / 2)
}

pub fn default_goal(spec: &GridSpec) -> Cell {
    Cell::new(0, spec.cols / 2)
}

/// An ordered chain of 4-adjacent cells from start to goal.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub grid: GridDims,
    pub cells: Vec<Cell>,
    pub total_cost: f64,
    /// States popped and expanded by the search that produced the path.
    pub expanded: u64,
}

impl GridPath {
    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().expect("paths are never empty")
    }

    pub fn steps(&self) -> usize {
        path_step_count(self)
    }

    /// Builds a path from explicit cells, charging entry costs from `grid`.
    pub fn from_cells(grid: &CostGrid, cells: Vec<Cell>) -> Result<Self, PlanError> {
        let dims = GridDims::from(grid.spec());
        validate_cells(&dims, &cells)?;
        let total_cost = cells.iter().skip(1).map(|c| grid.get(c.row, c.col)).sum();
        Ok(Self {
            grid: dims,
            cells,
            total_cost,
            expanded: 0,
        })
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        validate_cells(&self.grid, &self.cells)?;
        if !self.total_cost.is_finite() || self.total_cost < 0.0 {
            return Err(PlanError::InvalidPath(format!(
                "total_cost {} is not finite and nonnegative",
                self.total_cost
            )));
        }
        Ok(())
    }
}

fn validate_cells(dims: &GridDims, cells: &[Cell]) -> Result<(), PlanError> {
    if cells.is_empty() {
        return Err(PlanError::InvalidPath("path has no cells".into()));
    }
    for c in cells {
        if c.row >= dims.rows || c.col >= dims.cols {
            return Err(PlanError::InvalidPath(format!(
                "cell [{}, {}] outside {}x{} grid",
                c.row, c.col, dims.rows, dims.cols
            )));
        }
    }
    for pair in cells.windows(2) {
        if pair[0].manhattan(pair[1]) != 1 {
            return Err(PlanError::InvalidPath(format!(
                "cells [{}, {}] and [{}, {}] are not 4-adjacent",
                pair[0].row, pair[0].col, pair[1].row, pair[1].col
            )));
        }
    }
    Ok(())
}

/// Number of moves, i.e. cells minus one.
pub fn path_step_count(path: &GridPath) -> usize {
    path.cells.len().saturating_sub(1)
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    grid: GridDims,
    start: Cell,
    goal: Cell,
    path: Vec<Cell>,
    #[serde(serialize_with = "round_sig")]
    total_cost: f64,
    steps: usize,
    expanded: u64,
}

impl Serialize for GridPath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PathFile {
            grid: self.grid,
            start: self.start(),
            goal: self.goal(),
            path: self.cells.clone(),
            total_cost: self.total_cost,
            steps: self.steps(),
            expanded: self.expanded,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GridPath {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = PathFile::deserialize(deserializer)?;
        let path = GridPath {
            grid: f.grid,
            cells: f.path,
            total_cost: f.total_cost,
            expanded: f.expanded,
        };
        path.validate().map_err(D::Error::custom)?;
        if path.start() != f.start || path.goal() != f.goal {
            return Err(D::Error::custom(
                "start/goal disagree with the path endpoints",
            ));
        }
        if path.steps() != f.steps {
            return Err(D::Error::custom(format!(
                "steps is {} but the path has {} moves",
                f.steps,
                path.steps()
            )));
        }
        Ok(path)
    }
}

const ORDER: [(i32, i32); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Debug, Clone, Copy)]
struct Entry {
    f: f64,
    h: f64,
    seq: u64,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed: BinaryHeap is a max-heap and we want the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub fn astar(p: &PlanProblem) -> Result<GridPath, PlanError> {
    p.check_bounds()?;
    let grid = &p.grid;
    let c_min = grid.min_cost();
    if c_min <= 0.0 || c_min.is_nan() {
        return Err(PlanError::NonPositiveMinimum(c_min));
    }
    let (rows, cols) = (grid.rows() as usize, grid.cols() as usize);
    let cost = grid.cells();
    let goal = p.goal;
    let heuristic = |i: usize| {
        let c = Cell::new((i / cols) as u32, (i % cols) as u32);
        c_min * c.manhattan(goal) as f64
    };
    let start = p.start.row as usize * cols + p.start.col as usize;
    let goal_index = goal.row as usize * cols + goal.col as usize;

    // "Very high" initial cost for every cell until it is reached.
    let mut best = vec![f64::INFINITY; rows * cols];
    let mut parent = vec![usize::MAX; rows * cols];
    let mut closed = vec![false; rows * cols];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    let mut expanded = 0u64;

    best[start] = 0.0;
    let h0 = heuristic(start);
    open.push(Entry {
        f: h0,
        h: h0,
        seq,
        index: start,
    });

    while let Some(Entry { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        expanded += 1;
        if index == goal_index {
            break;
        }
        let (r, c) = ((index / cols) as i32, (index % cols) as i32);
        for (dr, dc) in ORDER {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr as usize >= rows || nc as usize >= cols {
                continue;
            }
            let next = nr as usize * cols + nc as usize;
            if closed[next] {
                continue;
            }
            let g = best[index] + cost[next];
            if g < best[next] {
                best[next] = g;
                parent[next] = index;
                let h = heuristic(next);
                seq += 1;
                open.push(Entry {
                    f: g + h,
                    h,
                    seq,
                    index: next,
                });
            }
        }
    }

    Ok(trace(
        grid,
        &parent,
        start,
        goal_index,
        best[goal_index],
        expanded,
    ))
}

fn trace(
    grid: &CostGrid,
    parent: &[usize],
    start: usize,
    goal: usize,
    total_cost: f64,
    expanded: u64,
) -> GridPath {
    let cols = grid.cols() as usize;
    let mut cells = vec![goal];
    let mut at = goal;
    while at != start {
        at = parent[at];
        cells.push(at);
    }
    cells.reverse();
    GridPath {
        grid: GridDims::from(grid.spec()),
        cells: cells
            .into_iter()
            .map(|i| Cell::new((i / cols) as u32, (i % cols) as u32))
            .collect(),
        total_cost,
        expanded,
    }
}

/// Uniform-cost search used to check [`astar`]. Written without reference
/// to the A* internals; only the cell and path types are shared.
pub fn dijkstra(p: &PlanProblem) -> Result<GridPath, PlanError> {
    use std::cmp::Reverse;

    p.check_bounds()?;
    let grid = &p.grid;
    let rows = grid.rows();
    let cols = grid.cols();

    let mut dist = vec![vec![f64::INFINITY; cols as usize]; rows as usize];
    let mut came_from: Vec<Vec<Option<Cell>>> = vec![vec![None; cols as usize]; rows as usize];
    let mut done: HashSet<Cell> = HashSet::new();
    // Keys: (distance bits, insertion order). Distances are nonnegative, so
    // their IEEE bit patterns order the same way as the values.
    let mut queue: BinaryHeap<Reverse<(u64, u64, Cell)>> = BinaryHeap::new();
    let mut counter = 0u64;
    let mut expanded = 0u64;

    dist[p.start.row as usize][p.start.col as usize] = 0.0;
    queue.push(Reverse((0f64.to_bits(), counter, p.start)));

    while let Some(Reverse((_, _, cell))) = queue.pop() {
        if !done.insert(cell) {
            continue;
        }
        expanded += 1;
        if cell == p.goal {
            break;
        }
        let here = dist[cell.row as usize][cell.col as usize];
        let neighbors = [
            (cell.row > 0).then(|| Cell::new(cell.row - 1, cell.col)),
            (cell.col + 1 < cols).then(|| Cell::new(cell.row, cell.col + 1)),
            (cell.row + 1 < rows).then(|| Cell::new(cell.row + 1, cell.col)),
            (cell.col > 0).then(|| Cell::new(cell.row, cell.col - 1)),
        ];
        for next in neighbors.into_iter().flatten() {
            if done.contains(&next) {
                continue;
            }
            let candidate = here + grid.get(next.row, next.col);
            let slot = &mut dist[next.row as usize][next.col as usize];
            if candidate < *slot {
                *slot = candidate;
                came_from[next.row as usize][next.col as usize] = Some(cell);
                counter += 1;
                queue.push(Reverse((candidate.to_bits(), counter, next)));
            }
        }
    }

    let mut cells = vec![p.goal];
    while let Some(prev) =
        came_from[cells.last().unwrap().row as usize][cells.last().unwrap().col as usize]
    {
        cells.push(prev);
    }
    cells.reverse();
    Ok(GridPath {
        grid: GridDims::from(grid.spec()),
        cells,
        total_cost: dist[p.goal.row as usize][p.goal.col as usize],
        expanded,
    })
}

/// Shared-cell sanity helper for tests and reports.
pub fn cell_set(path: &GridPath) -> HashSet<Cell> {
    path.cells.iter().copied().collect()
}
