//! k^2-TDMA activation schedules and the layered interference decomposition.

use crate::topology::Cell;
use crate::{Result, SimError};
use std::fmt::Write as _;

/// A k^2-slot TDMA schedule over the cell grid. A cell (row, col) is active
/// in the slot whose offset equals (row mod k, col mod k), so the k^2 slots
/// partition the cells and each cell transmits in exactly one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TdmaSchedule {
    pub k: usize,
}

impl TdmaSchedule {
    pub fn new(k: usize) -> Result<Self> {
        if !(3..=5).contains(&k) {
            return Err(SimError::Config(format!(
                "TDMA parameter k must be 3, 4 or 5, got {k}"
            )));
        }
        Ok(TdmaSchedule { k })
    }

    pub fn slot_count(&self) -> usize {
        self.k * self.k
    }

    pub fn slot_of(&self, cell: Cell) -> usize {
        (cell.row % self.k) * self.k + cell.col % self.k
    }

    /// Cells active in `slot` on a g x g grid.
    pub fn active_cells(&self, g: usize, slot: usize) -> Vec<Cell> {
        assert!(slot < self.slot_count());
        let (ro, co) = (slot / self.k, slot % self.k);
        let mut cells = Vec::new();
        let mut row = ro;
        while row < g {
            let mut col = co;
            while col < g {
                cells.push(Cell::new(row, col));
                col += self.k;
            }
            row += self.k;
        }
        cells
    }
}

/// The ring of co-active cells at Chebyshev cell-distance `l * k` from a
/// reference active cell, with Euclidean distance bounds in length units.
#[derive(Debug, Clone)]
pub struct InterferenceLayer {
    pub l: usize,
    pub cells: Vec<Cell>,
    pub min_dist: f64,
    pub max_dist: f64,
}

/// Distance bounds for layer `l` of a k-TDMA grid with the given cell side.
/// k = 5 uses the ((5l-4)s, 8(5l-4)s) bounds; k = 3 and 4 generalize to
/// ((kl-(k-1))s, sqrt(2)(kl+(k-1))s).
pub fn layer_distance_bounds(k: usize, l: usize, cell_side: f64) -> (f64, f64) {
    let lo = (k * l - (k - 1)) as f64 * cell_side;
    let hi = if k == 5 {
        8.0 * (5 * l - 4) as f64 * cell_side
    } else {
        std::f64::consts::SQRT_2 * (k * l + (k - 1)) as f64 * cell_side
    };
    (lo, hi)
}

/// Group the cells co-active with `reference` into concentric layers.
/// Boundary layers truncate (no wrap-around); a full interior layer has 8l
/// cells.
pub fn interference_layers(reference: Cell, g: usize, k: usize) -> Vec<InterferenceLayer> {
    let cell_side = 1.0 / g as f64;
    let max_l = if g > 1 { (g - 1) / k } else { 0 };
    let mut layers: Vec<InterferenceLayer> = (1..=max_l)
        .map(|l| {
            let (min_dist, max_dist) = layer_distance_bounds(k, l, cell_side);
            InterferenceLayer {
                l,
                cells: Vec::new(),
                min_dist,
                max_dist,
            }
        })
        .collect();
    let sched = TdmaSchedule { k };
    let slot = sched.slot_of(reference);
    for cell in sched.active_cells(g, slot) {
        if cell == reference {
            continue;
        }
        let d = cell.chebyshev(&reference);
        debug_assert_eq!(d % k, 0);
        let l = d / k;
        layers[l - 1].cells.push(cell);
    }
    layers.retain(|l| !l.cells.is_empty());
    layers
}

/// Mean total interference power at the center of `reference` from all
/// co-active cells, with `tx_density` unit-mean-fading transmitters per cell
/// placed at cell centers. Exact grid sum; serves as the oracle the layered
/// bounds must bracket.
pub fn expected_interference_exact(
    g: usize,
    k: usize,
    reference: Cell,
    tx_density: f64,
    per_hop_power: f64,
    alpha: f64,
) -> f64 {
    let sched = TdmaSchedule { k };
    let slot = sched.slot_of(reference);
    let rx = reference.center(g);
    let mut total = 0.0;
    for cell in sched.active_cells(g, slot) {
        if cell == reference {
            continue;
        }
        let d = cell.center(g).dist(&rx);
        total += per_hop_power * tx_density * d.powf(-alpha);
    }
    total
}

/// Layered lower/upper bounds on the exact interference sum, using the layer
/// distance bounds with the truncated per-layer cell counts.
pub fn layered_interference_bounds(
    g: usize,
    k: usize,
    reference: Cell,
    tx_density: f64,
    per_hop_power: f64,
    alpha: f64,
) -> (f64, f64) {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for layer in interference_layers(reference, g, k) {
        let count = layer.cells.len() as f64;
        lower += count * per_hop_power * tx_density * layer.max_dist.powf(-alpha);
        upper += count * per_hop_power * tx_density * layer.min_dist.powf(-alpha);
    }
    (lower, upper)
}

/// CSV layer table: layer, cell count, distance bounds and the exact
/// contribution of that layer's cells.
pub fn layer_table_csv(
    g: usize,
    k: usize,
    reference: Cell,
    tx_density: f64,
    per_hop_power: f64,
    alpha: f64,
) -> String {
    let rx = reference.center(g);
    let mut out = String::from("layer,cell_count,min_dist,max_dist,contribution\n");
    for layer in interference_layers(reference, g, k) {
        let contribution: f64 = layer
            .cells
            .iter()
            .map(|c| per_hop_power * tx_density * c.center(g).dist(&rx).powf(-alpha))
            .sum();
        writeln!(
            out,
            "{},{},{},{},{}",
            layer.l,
            layer.cells.len(),
            layer.min_dist,
            layer.max_dist,
            contribution
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn active_cells_mod_pattern() {
        let sched = TdmaSchedule::new(5).unwrap();
        let cells = sched.active_cells(10, 0);
        let expect: HashSet<Cell> = [(0, 0), (0, 5), (5, 0), (5, 5)]
            .iter()
            .map(|&(r, c)| Cell::new(r, c))
            .collect();
        assert_eq!(cells.iter().copied().collect::<HashSet<_>>(), expect);

        let sched = TdmaSchedule::new(3).unwrap();
        for slot in 0..9 {
            assert_eq!(sched.active_cells(9, slot).len(), 9);
        }
    }

    #[test]
    fn slots_partition_the_grid() {
        let sched = TdmaSchedule::new(5).unwrap();
        let mut seen = HashSet::new();
        for slot in 0..25 {
            for c in sched.active_cells(10, slot) {
                assert!(seen.insert(c), "cell active twice: {c:?}");
                assert_eq!(sched.slot_of(c), slot);
            }
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn interior_layer_counts() {
        // Interior cell of a large grid: 8l cells per layer.
        let layers = interference_layers(Cell::new(17, 17), 35, 5);
        assert_eq!(layers[0].cells.len(), 8);
        assert_eq!(layers[1].cells.len(), 16);
        assert_eq!(layers[2].cells.len(), 24);
    }

    #[test]
    fn corner_layer_truncates() {
        let layers = interference_layers(Cell::new(0, 0), 15, 5);
        assert_eq!(layers[0].cells.len(), 3);
    }

    #[test]
    fn layer_decomposition_is_exact() {
        let g = 23;
        let k = 4;
        let reference = Cell::new(6, 10);
        let sched = TdmaSchedule { k };
        let slot = sched.slot_of(reference);
        let mut expect: HashSet<Cell> = sched.active_cells(g, slot).into_iter().collect();
        expect.remove(&reference);
        let mut got = HashSet::new();
        for layer in interference_layers(reference, g, k) {
            for c in layer.cells {
                assert!(got.insert(c));
            }
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn single_cell_oracle() {
        // One interfering cell at distance 1, density 1, p = 1, alpha = 4 -> 1.
        // Construct via direct distance check on a 2-cell-relevant setup.
        let g = 10;
        let k = 5;
        let reference = Cell::new(0, 0);
        // Nearest co-active cells on a 10x10 grid with k=5: (0,5), (5,0), (5,5).
        let exact = expected_interference_exact(g, k, reference, 1.0, 1.0, 4.0);
        let s = 1.0 / g as f64;
        let expect = (5.0 * s).powf(-4.0) * 2.0
            + ((5.0 * s) * std::f64::consts::SQRT_2).powf(-4.0);
        assert!((exact - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn interference_scales_linearly_in_power() {
        let a = expected_interference_exact(35, 5, Cell::new(17, 12), 2.0, 1.0, 4.0);
        let b = expected_interference_exact(35, 5, Cell::new(17, 12), 2.0, 2.0, 4.0);
        assert!((b - 2.0 * a).abs() / a < 1e-12);
    }

    #[test]
    fn layered_bounds_bracket_exact_sum() {
        for alpha in [2.5, 4.0] {
            for row in 5..30 {
                for col in 5..30 {
                    let reference = Cell::new(row, col);
                    let exact =
                        expected_interference_exact(35, 5, reference, 1.3, 0.7, alpha);
                    let (lo, hi) =
                        layered_interference_bounds(35, 5, reference, 1.3, 0.7, alpha);
                    assert!(
                        lo <= exact && exact <= hi,
                        "alpha={alpha} cell=({row},{col}): {lo} <= {exact} <= {hi}"
                    );
                }
            }
        }
    }

    #[test]
    fn layer_series_converges() {
        let alpha = 4.0;
        let partial = |upto: usize| -> f64 {
            (1..=upto).map(|l| 1.0 / ((5 * l - 4) as f64).powf(alpha - 1.0)).sum()
        };
        assert!((partial(1000) - partial(100)).abs() < 1e-3);
    }

    #[test]
    fn normalization_band_over_delay_sweep() {
        // With tx_density = c*M/D, per_hop_power = P/D and cell_side = O(1/D),
        // the exact sum divided by P*M*D^(alpha-2) stays within a fixed band
        // as D sweeps 4 -> 16. D = 2 is excluded: its 8-cell grid holds no
        // full interference layer at k = 5.
        let alpha = 4.0;
        let (p_total, m) = (0.37, 24.0);
        let mut ratios = Vec::new();
        for d in [4.0f64, 8.0, 16.0] {
            let g = crate::topology::grid_side_for_delay(d, crate::topology::DEFAULT_GRID_FACTOR);
            let reference = Cell::new(g / 2, g / 2);
            let exact = expected_interference_exact(
                g,
                5,
                reference,
                m / d,
                p_total / d,
                alpha,
            );
            ratios.push(exact / (p_total * m * d.powf(alpha - 2.0)));
        }
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 3.0, "ratios {ratios:?}");
    }

    #[test]
    fn layer_csv_has_header_and_rows() {
        let csv = layer_table_csv(15, 5, Cell::new(7, 7), 1.0, 1.0, 4.0);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "layer,cell_count,min_dist,max_dist,contribution"
        );
        assert!(lines.count() >= 1);
    }
}
