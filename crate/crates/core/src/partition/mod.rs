//! Balanced hyperrectangle partitioning of `[0,1]^d`.
//!
//! Three stages: a quantile grid, a merge pass that grows every box below
//! `N_min` into a neighbouring slab, and a split pass that halves every box
//! above `N_max` at the member median. Boxes are half-open `[lower, upper)`
//! per dimension, closed where `upper = 1`.
//!
//! The neighbour relation is maintained through every stage and becomes the
//! [`PartitionGraph`] used by the sampler.

mod dump;
mod geometry;
mod graph;
mod grid;
mod merge;
mod split;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;

pub use dump::{read_partition, write_partition, CellRecord, PartitionDump, CELLS_FILE, MEMBERS_FILE};
pub use geometry::{closures_adjacent, face_contact, Side};
pub use graph::{build_graph, PartitionGraph};
pub use grid::{default_grid, equal_volume_partition, initialize_grid, quantile_boundaries};
pub use merge::merge_pass;
pub use split::split_pass;

/// Axis-aligned box with the indices of the data points it holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub members: Vec<usize>,
    /// Set when a box above `N_max` cannot be split (all coordinates tied).
    pub oversize: bool,
}

impl HyperRect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        HyperRect {
            lower,
            upper,
            members: Vec::new(),
            oversize: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn side(&self, p: usize) -> f64 {
        self.upper[p] - self.lower[p]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|p| self.side(p)).product()
    }

    /// Longest over shortest side.
    pub fn aspect_ratio(&self) -> f64 {
        geometry::aspect_ratio(&self.lower, &self.upper)
    }

    /// Half-open membership, closed at the domain boundary 1.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(p, &v)| v >= self.lower[p] && (v < self.upper[p] || (self.upper[p] == 1.0 && v == 1.0)))
    }
}

/// A set of disjoint boxes covering `[0,1]^d`, plus their neighbour lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitioning {
    dim: usize,
    cells: Vec<HyperRect>,
    n_min: usize,
    n_max: usize,
    adjacency: Vec<Vec<usize>>,
}

impl Partitioning {
    pub(crate) fn from_parts(dim: usize, cells: Vec<HyperRect>, adjacency: Vec<Vec<usize>>) -> Self {
        debug_assert_eq!(cells.len(), adjacency.len());
        Partitioning {
            dim,
            cells,
            n_min: 0,
            n_max: usize::MAX,
            adjacency,
        }
    }

    /// Rebuild from boxes alone; neighbours are recomputed geometrically.
    pub fn from_cells(dim: usize, cells: Vec<HyperRect>, n_min: usize, n_max: usize) -> Self {
        let adjacency = graph::neighbour_lists(&cells);
        Partitioning {
            dim,
            cells,
            n_min,
            n_max,
            adjacency,
        }
    }

    /// Set the cardinality bounds used by [`merge_pass`] and [`split_pass`].
    pub fn with_bounds(mut self, n_min: usize, n_max: usize) -> Result<Self> {
        validate_bounds(n_min, n_max)?;
        self.n_min = n_min;
        self.n_max = n_max;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[HyperRect] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Sorted neighbour indices of cell `i`.
    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Graph from the neighbour lists maintained during construction.
    pub fn graph(&self) -> PartitionGraph {
        PartitionGraph::from_adjacency(self.adjacency.clone())
    }

    pub fn total_members(&self) -> usize {
        self.cells.iter().map(HyperRect::len).sum()
    }

    /// Cell index of every data point, `None` where a point is unassigned.
    pub fn assignment(&self, n: usize) -> Vec<Option<usize>> {
        let mut a = vec![None; n];
        for (c, cell) in self.cells.iter().enumerate() {
            for &i in &cell.members {
                if i < n {
                    a[i] = Some(c);
                }
            }
        }
        a
    }

    /// Check exhaustiveness, exclusivity, geometry and (if `balanced`) the
    /// cardinality bounds. Returns a description of the first violation.
    pub fn check_invariants(&self, x: &Points, balanced: bool) -> std::result::Result<(), String> {
        let n = x.len();
        let mut seen = vec![false; n];
        for (c, cell) in self.cells.iter().enumerate() {
            for p in 0..self.dim {
                if !(cell.lower[p] < cell.upper[p]) {
                    return Err(format!("cell {c} is degenerate along dimension {p}"));
                }
                if cell.lower[p] < 0.0 || cell.upper[p] > 1.0 {
                    return Err(format!("cell {c} leaves the unit cube"));
                }
            }
            for &i in &cell.members {
                if i >= n {
                    return Err(format!("cell {c} holds out-of-range index {i}"));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(format!("point {i} is in more than one cell"));
                }
                if !cell.contains(x.row(i)) {
                    return Err(format!("point {i} lies outside cell {c}"));
                }
            }
            if balanced && !cell.oversize && (cell.len() < self.n_min || cell.len() > self.n_max) {
                return Err(format!(
                    "cell {c} has {} members, outside [{}, {}]",
                    cell.len(),
                    self.n_min,
                    self.n_max
                ));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!("point {i} is in no cell"));
        }
        let vol: f64 = self.cells.iter().map(HyperRect::volume).sum();
        if (vol - 1.0).abs() > 1e-9 {
            return Err(format!("cell volumes sum to {vol}, not 1"));
        }
        Ok(())
    }

    pub fn summary(&self) -> PartitionSummary {
        PartitionSummary::of(self)
    }
}

pub fn validate_bounds(n_min: usize, n_max: usize) -> Result<()> {
    if n_min == 0 {
        return Err(Error::config("N_min must be at least 1"));
    }
    if n_max < 2 * n_min {
        return Err(Error::config(format!(
            "N_max ({n_max}) must be at least 2·N_min ({})",
            2 * n_min
        )));
    }
    Ok(())
}

/// Mutable working set shared by the merge and split stages: a slab of
/// optional cells with neighbour sets keyed by slot.
pub(crate) struct Work {
    dim: usize,
    n_min: usize,
    n_max: usize,
    cells: Vec<Option<HyperRect>>,
    adj: Vec<BTreeSet<usize>>,
}

impl Work {
    fn from_partitioning(part: Partitioning) -> Self {
        Work {
            dim: part.dim,
            n_min: part.n_min,
            n_max: part.n_max,
            adj: part.adjacency.into_iter().map(|v| v.into_iter().collect()).collect(),
            cells: part.cells.into_iter().map(Some).collect(),
        }
    }

    fn into_partitioning(self) -> Partitioning {
        let mut remap = vec![usize::MAX; self.cells.len()];
        let mut next = 0;
        for (i, c) in self.cells.iter().enumerate() {
            if c.is_some() {
                remap[i] = next;
                next += 1;
            }
        }
        let mut cells = Vec::with_capacity(next);
        let mut adjacency = Vec::with_capacity(next);
        for (c, nb) in self.cells.into_iter().zip(self.adj) {
            if let Some(c) = c {
                cells.push(c);
                let mut v: Vec<usize> = nb.into_iter().map(|j| remap[j]).collect();
                v.sort_unstable();
                adjacency.push(v);
            }
        }
        Partitioning {
            dim: self.dim,
            cells,
            n_min: self.n_min,
            n_max: self.n_max,
            adjacency,
        }
    }

    fn cell(&self, i: usize) -> &HyperRect {
        self.cells[i].as_ref().expect("live cell")
    }

    fn count(&self, i: usize) -> usize {
        self.cell(i).len()
    }

    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter_map(|(i, c)| c.as_ref().map(|_| i))
    }
}

/// Cell count, cardinality and volume statistics of a partitioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub cells: usize,
    pub nonempty: usize,
    pub empty: usize,
    pub oversize: usize,
    pub min_cardinality: usize,
    pub mean_cardinality: f64,
    pub max_cardinality: usize,
    /// Mean over nonempty cells only.
    pub mean_nonempty_cardinality: f64,
    pub cardinality_histogram: Histogram,
    pub volume_histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn linear(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || bins == 0 {
            return Histogram {
                edges: Vec::new(),
                counts: Vec::new(),
            };
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram { edges, counts }
    }
}

impl PartitionSummary {
    fn of(part: &Partitioning) -> Self {
        let counts: Vec<usize> = part.cells.iter().map(HyperRect::len).collect();
        let nonempty = counts.iter().filter(|c| **c > 0).count();
        let total: usize = counts.iter().sum();
        let card: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
        let vols: Vec<f64> = part.cells.iter().map(HyperRect::volume).collect();
        PartitionSummary {
            cells: counts.len(),
            nonempty,
            empty: counts.len() - nonempty,
            oversize: part.cells.iter().filter(|c| c.oversize).count(),
            min_cardinality: counts.iter().copied().min().unwrap_or(0),
            mean_cardinality: total as f64 / counts.len().max(1) as f64,
            max_cardinality: counts.iter().copied().max().unwrap_or(0),
            mean_nonempty_cardinality: total as f64 / nonempty.max(1) as f64,
            cardinality_histogram: Histogram::linear(&card, 10),
            volume_histogram: Histogram::linear(&vols, 10),
        }
    }
}

/// Initialize, merge, split, and return the partitioning with its graph.
///
/// `m_per_dim = None` selects [`default_grid`].
pub fn partition_pipeline(
    x: &Points,
    n_min: usize,
    n_max: usize,
    m_per_dim: Option<&[usize]>,
) -> Result<(Partitioning, PartitionGraph)> {
    validate_bounds(n_min, n_max)?;
    if x.len() < n_min {
        return Err(Error::config(format!(
            "{} points cannot fill a cell of at least N_min = {n_min}",
            x.len()
        )));
    }
    let grid = match m_per_dim {
        Some(m) => m.to_vec(),
        None => default_grid(x.len(), x.dim(), n_min, n_max),
    };
    let part = initialize_grid(x, &grid)?.with_bounds(n_min, n_max)?;
    let part = merge_pass(part)?;
    let part = split_pass(part, x)?;
    let graph = part.graph();
    Ok((part, graph))
}

#[cfg(test)]
mod tests;
