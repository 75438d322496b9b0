//! Node placement, cell grid, S-D pair drawing, XY routes and the 2/3-cell
//! hop sequences.

use crate::rng::{substream, Stream};
use crate::{Result, SimError};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// Node placement strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    RandomUniform,
    RegularGrid,
}

/// 2-D coordinate in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn dist(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Cell coordinate (row, col) in the square grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// Center of the cell for a grid with `g` cells per side.
    pub fn center(&self, g: usize) -> Point {
        let s = 1.0 / g as f64;
        Point {
            x: (self.col as f64 + 0.5) * s,
            y: (self.row as f64 + 0.5) * s,
        }
    }

    pub fn chebyshev(&self, other: &Cell) -> usize {
        let dr = self.row.abs_diff(other.row);
        let dc = self.col.abs_diff(other.col);
        dr.max(dc)
    }
}

/// Node positions plus the square cell partition and membership index.
#[derive(Debug, Clone)]
pub struct NetworkLayout {
    pub n: usize,
    pub placement: Placement,
    pub positions: Vec<Point>,
    pub cells_per_side: usize,
    /// Cell of each node, indexed by node id.
    pub node_cell: Vec<Cell>,
    /// Node ids per cell, row-major (`row * g + col`).
    pub cell_index: Vec<Vec<usize>>,
    /// Raised when the expected occupancy `A_s * n` drops below 1, i.e. the
    /// grid is finer than the occupancy concentration regime supports.
    pub occupancy_warning: bool,
}

impl NetworkLayout {
    pub fn cell_side(&self) -> f64 {
        1.0 / self.cells_per_side as f64
    }

    /// Per-cell area `A_s = 1/g^2`.
    pub fn cell_area(&self) -> f64 {
        let s = self.cell_side();
        s * s
    }

    pub fn nodes_in(&self, cell: Cell) -> &[usize] {
        &self.cell_index[cell.row * self.cells_per_side + cell.col]
    }

    /// Build the cell membership index for `g` cells per side.
    pub fn build(n: usize, placement: Placement, positions: Vec<Point>, g: usize) -> Self {
        assert!(g >= 1);
        let mut cell_index = vec![Vec::new(); g * g];
        let mut node_cell = Vec::with_capacity(n);
        for (id, p) in positions.iter().enumerate() {
            let col = ((p.x * g as f64) as usize).min(g - 1);
            let row = ((p.y * g as f64) as usize).min(g - 1);
            node_cell.push(Cell::new(row, col));
            cell_index[row * g + col].push(id);
        }
        let occupancy_warning = (n as f64) / ((g * g) as f64) < 1.0;
        NetworkLayout {
            n,
            placement,
            positions,
            cells_per_side: g,
            node_cell,
            cell_index,
            occupancy_warning,
        }
    }

    /// Line-oriented debug dump: one node per line `id x y row col`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, p) in self.positions.iter().enumerate() {
            let c = self.node_cell[id];
            writeln!(out, "{} {:.17} {:.17} {} {}", id, p.x, p.y, c.row, c.col).unwrap();
        }
        out
    }
}

/// Place `n` nodes in the unit square.
///
/// RegularGrid puts node `i*sqrt(n)+j` at `((j+0.5)/sqrt(n), (i+0.5)/sqrt(n))`
/// so adjacent spacing is exactly `1/sqrt(n)`.
pub fn place_nodes(n: usize, placement: Placement, seed: u64) -> Result<Vec<Point>> {
    if n < 4 {
        return Err(SimError::Config(format!("n must be >= 4, got {n}")));
    }
    match placement {
        Placement::RandomUniform => {
            let mut rng = substream(seed, Stream::Topology, &[]);
            Ok((0..n)
                .map(|_| Point {
                    x: rng.gen::<f64>(),
                    y: rng.gen::<f64>(),
                })
                .collect())
        }
        Placement::RegularGrid => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(SimError::Config(format!(
                    "RegularGrid requires a perfect-square n, got {n}"
                )));
            }
            let mut pts = Vec::with_capacity(n);
            for i in 0..side {
                for j in 0..side {
                    pts.push(Point {
                        x: (j as f64 + 0.5) / side as f64,
                        y: (i as f64 + 0.5) / side as f64,
                    });
                }
            }
            Ok(pts)
        }
    }
}

/// Default grid sizing constant: `g = max(5, round((15/4) * D))`.
pub const DEFAULT_GRID_FACTOR: f64 = 15.0 / 4.0;

/// Cells per side for a target delay `d`, with a config-overridable factor.
pub fn grid_side_for_delay(d_target: f64, grid_factor: f64) -> usize {
    ((grid_factor * d_target).round() as usize).max(5)
}

/// Partition the area into square cells sized for the target delay and assign
/// every node to its cell.
pub fn build_cell_grid(
    n: usize,
    placement: Placement,
    positions: Vec<Point>,
    d_target: f64,
    grid_factor: f64,
) -> Result<NetworkLayout> {
    if d_target < 1.0 {
        return Err(SimError::Config(format!(
            "target delay must be >= 1, got {d_target}"
        )));
    }
    let g = grid_side_for_delay(d_target, grid_factor);
    Ok(NetworkLayout::build(n, placement, positions, g))
}

/// One source-destination pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdPair {
    pub source: usize,
    pub destination: usize,
    pub src_cell: Cell,
    pub dst_cell: Cell,
}

/// Lattice rows of a regular grid, each sorted by x.
fn lattice_rows(layout: &NetworkLayout) -> Vec<Vec<usize>> {
    let mut keys: Vec<(u64, u64, usize)> = layout
        .positions
        .iter()
        .enumerate()
        .map(|(id, p)| (p.y.to_bits(), p.x.to_bits(), id))
        .collect();
    keys.sort_unstable();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut cur_key = None;
    for (y, _, id) in keys {
        if cur_key != Some(y) {
            rows.push(Vec::new());
            cur_key = Some(y);
        }
        rows.last_mut().unwrap().push(id);
    }
    rows.retain(|r| r.len() >= 2);
    rows
}

/// Pairs per row available from the end bands of width `w` cell columns.
fn row_band_capacity(layout: &NetworkLayout, row: &[usize], w: usize) -> usize {
    let g = layout.cells_per_side;
    let left = row
        .iter()
        .filter(|&&id| layout.node_cell[id].col < w)
        .count();
    let right = row
        .iter()
        .filter(|&&id| layout.node_cell[id].col >= g - w)
        .count();
    left.min(right)
}

/// Maximum number of horizontal pairs the layout supports (band width capped
/// at half the grid so routes always span several cells).
pub fn horizontal_pair_capacity(layout: &NetworkLayout) -> usize {
    let w = (layout.cells_per_side / 2).max(1);
    lattice_rows(layout)
        .iter()
        .map(|row| row_band_capacity(layout, row, w))
        .sum()
}

/// Draw `m` S-D pairs. Endpoints are drawn without replacement, so each node
/// serves as the endpoint of at most one pair. In horizontal mode (regular
/// grid only) each pair spans one lattice row: the source sits in the
/// leftmost and the destination in the rightmost band of cell columns
/// (direction randomized), using the narrowest band width that fits `m`
/// pairs; pairs are spread round-robin over shuffled rows so every route
/// spans nearly the whole grid.
pub fn draw_sd_pairs(
    layout: &NetworkLayout,
    m: usize,
    horizontal: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SdPair>> {
    if 2 * m > layout.n {
        return Err(SimError::Config(format!(
            "2M <= n required: M={m}, n={}",
            layout.n
        )));
    }
    let mk = |s: usize, d: usize| SdPair {
        source: s,
        destination: d,
        src_cell: layout.node_cell[s],
        dst_cell: layout.node_cell[d],
    };
    if !horizontal {
        let mut ids: Vec<usize> = (0..layout.n).collect();
        ids.shuffle(rng);
        return Ok((0..m).map(|i| mk(ids[2 * i], ids[2 * i + 1])).collect());
    }
    if layout.placement != Placement::RegularGrid {
        return Err(SimError::Config(
            "horizontal pair mode requires a regular grid".into(),
        ));
    }
    let g = layout.cells_per_side;
    let mut rows = lattice_rows(layout);
    // Narrowest end-band width that offers room for m pairs.
    let w_max = (g / 2).max(1);
    let mut width = 0;
    for w in 1..=w_max {
        let cap: usize = rows.iter().map(|r| row_band_capacity(layout, r, w)).sum();
        if cap >= m {
            width = w;
            break;
        }
    }
    if width == 0 {
        return Err(SimError::Config(format!(
            "cannot place {m} horizontal pairs: capacity is {}",
            horizontal_pair_capacity(layout)
        )));
    }
    rows.shuffle(rng);
    // Leftmost/rightmost candidates per row; pairs are assigned round-robin
    // over rows so routes spread evenly across the grid.
    let mut lefts: Vec<Vec<usize>> = Vec::with_capacity(rows.len());
    let mut rights: Vec<Vec<usize>> = Vec::with_capacity(rows.len());
    for row in &rows {
        lefts.push(
            row.iter()
                .copied()
                .filter(|&id| layout.node_cell[id].col < width)
                .collect(),
        );
        rights.push(
            row.iter()
                .rev()
                .copied()
                .filter(|&id| layout.node_cell[id].col >= g - width)
                .collect(),
        );
    }
    let mut pairs = Vec::with_capacity(m);
    let mut round = 0;
    while pairs.len() < m {
        let before = pairs.len();
        for r in 0..rows.len() {
            if pairs.len() == m {
                break;
            }
            if round < lefts[r].len() && round < rights[r].len() {
                let (a, b) = (lefts[r][round], rights[r][round]);
                let (s, d) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                pairs.push(mk(s, d));
            }
        }
        if pairs.len() == before {
            break;
        }
        round += 1;
    }
    if pairs.len() < m {
        return Err(SimError::Config(format!(
            "cannot place {m} horizontal pairs: capacity is {}",
            pairs.len()
        )));
    }
    Ok(pairs)
}

/// XY routing: horizontally to the destination column, then vertically.
pub fn xy_route(src_cell: Cell, dst_cell: Cell) -> Vec<Cell> {
    let mut path = vec![src_cell];
    let row = src_cell.row;
    let mut col = src_cell.col;
    while col != dst_cell.col {
        col = if dst_cell.col > col { col + 1 } else { col - 1 };
        path.push(Cell::new(row, col));
    }
    let mut row = row;
    while row != dst_cell.row {
        row = if dst_cell.row > row { row + 1 } else { row - 1 };
        path.push(Cell::new(row, dst_cell.col));
    }
    path
}

/// Transmission mode of a hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopMode {
    Mode1,
    Mode2Step1,
    Mode2Step2,
}

/// One cell-to-cell hop along a route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellHop {
    pub from_cell: Cell,
    pub to_cell: Cell,
    /// Cells advanced along the path. 2 or 3 for regular Mode 1 steps; 0 or 1
    /// only for the padded Mode 2 hops of degenerate short routes.
    pub step_size: usize,
    pub mode: HopMode,
}

/// Step sizes covering `advances` path cells: alternate 3 then 2, with the
/// remainder absorbed at the tail. Consecutive 2-steps appear only where the
/// remainder forces them.
fn step_sizes(advances: usize) -> Vec<usize> {
    let mut steps = Vec::new();
    let mut rem = advances;
    let mut next = 3usize;
    while rem > 4 {
        steps.push(next);
        rem -= next;
        next = 5 - next;
    }
    match rem {
        0 => {}
        1 => match steps.last().copied() {
            Some(3) => {
                steps.pop();
                steps.push(2);
                steps.push(2);
            }
            Some(2) => {
                steps.pop();
                steps.push(3);
            }
            _ => steps.push(1),
        },
        2 | 3 => steps.push(rem),
        4 => {
            steps.push(2);
            steps.push(2);
        }
        _ => unreachable!(),
    }
    steps
}

/// Turn a cell path into the hop sequence: Mode 1 steps of 2/3 cells, with
/// the final two hops re-tagged as the two Mode 2 steps. Every route has at
/// least two hops; same-cell and adjacent-cell pairs are padded with in-place
/// hops using the source's own cell as Cell F.
pub fn hop_sequence(cell_path: &[Cell]) -> Vec<CellHop> {
    assert!(!cell_path.is_empty());
    let advances = cell_path.len() - 1;
    let mut hops: Vec<CellHop> = Vec::new();
    if advances == 0 {
        let c = cell_path[0];
        for _ in 0..2 {
            hops.push(CellHop {
                from_cell: c,
                to_cell: c,
                step_size: 0,
                mode: HopMode::Mode1,
            });
        }
    } else {
        let steps = step_sizes(advances);
        let mut pos = 0usize;
        for s in steps {
            hops.push(CellHop {
                from_cell: cell_path[pos],
                to_cell: cell_path[pos + s],
                step_size: s,
                mode: HopMode::Mode1,
            });
            pos += s;
        }
        debug_assert_eq!(pos, advances);
        if hops.len() == 1 {
            // Artificial extra hop so every pair has at least two hops.
            hops.insert(
                0,
                CellHop {
                    from_cell: cell_path[0],
                    to_cell: cell_path[0],
                    step_size: 0,
                    mode: HopMode::Mode1,
                },
            );
        }
    }
    let h = hops.len();
    hops[h - 2].mode = HopMode::Mode2Step1;
    hops[h - 1].mode = HopMode::Mode2Step2;
    hops
}

/// One S-D pair's cell path and hop sequence.
#[derive(Debug, Clone)]
pub struct SdRoute {
    pub pair: SdPair,
    pub cell_path: Vec<Cell>,
    pub hops: Vec<CellHop>,
}

impl SdRoute {
    pub fn build(pair: SdPair) -> Self {
        let cell_path = xy_route(pair.src_cell, pair.dst_cell);
        let hops = hop_sequence(&cell_path);
        SdRoute {
            pair,
            cell_path,
            hops,
        }
    }

    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    /// Debug dump: `pair src dst | path cells | hop steps`.
    pub fn to_text(&self, index: usize) -> String {
        let path: Vec<String> = self
            .cell_path
            .iter()
            .map(|c| format!("{}:{}", c.row, c.col))
            .collect();
        let steps: Vec<String> = self.hops.iter().map(|h| h.step_size.to_string()).collect();
        format!(
            "{} {} {} | {} | {}",
            index,
            self.pair.source,
            self.pair.destination,
            path.join(","),
            steps.join(",")
        )
    }
}

/// Number of distinct routes whose cell path passes through each cell,
/// row-major over the grid.
pub fn paths_per_cell(routes: &[SdRoute], g: usize) -> Vec<u32> {
    let mut counts = vec![0u32; g * g];
    let mut seen = vec![u32::MAX; g * g];
    for (i, route) in routes.iter().enumerate() {
        for c in &route.cell_path {
            let idx = c.row * g + c.col;
            if seen[idx] != i as u32 {
                seen[idx] = i as u32;
                counts[idx] += 1;
            }
        }
    }
    counts
}
