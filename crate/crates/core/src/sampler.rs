//! One representative point per cell, drawn by walking the partition graph.
//!
//! Cells are visited in order of decreasing within-cell response variance,
//! always moving to the highest-variance unvisited neighbour of the cells
//! already visited. The member drawn from each cell is weighted by a Gaussian
//! kernel on the distance between its response and the responses drawn from
//! previously visited neighbours.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{PartitionGraph, Partitioning};
use crate::points::Points;

/// Kernel width in standardized response units.
pub const DEFAULT_ETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub eta: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            eta: DEFAULT_ETA,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::config(format!(
                "eta must be positive and finite, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Seed of ensemble member `i`'s stream.
pub fn member_seed(base: u64, member: usize) -> u64 {
    base ^ member as u64
}

/// Fresh seed for a retried draw, derived from the failed one.
pub fn retry_seed(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub cell_id: usize,
    pub chosen_index: usize,
    pub neighbor_ids: Vec<usize>,
    pub weight_entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleDraw {
    /// Chosen catalog row for each cell, indexed by cell.
    pub chosen: Vec<usize>,
    /// Cells in the order they were visited.
    pub order: Vec<usize>,
    pub trace: Option<Vec<TraceStep>>,
}

impl SubsampleDraw {
    /// Drawn rows in visit order.
    pub fn rows(&self) -> Vec<usize> {
        self.order.iter().map(|&c| self.chosen[c]).collect()
    }

    /// Inputs and responses of the drawn rows, in visit order.
    pub fn gather(&self, x: &Points, y: &[f64]) -> (Points, Vec<f64>) {
        let rows = self.rows();
        (x.select(&rows), rows.iter().map(|&i| y[i]).collect())
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for step in self.trace.iter().flatten() {
            serde_json::to_writer(&mut w, step).map_err(|e| Error::json(path, e))?;
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Sample variance (n − 1 denominator) of each cell's responses.
pub fn cell_variances(part: &Partitioning, y: &[f64]) -> Result<Vec<f64>> {
    part.cells()
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let n = cell.len();
            if n < 2 {
                return Err(Error::config(format!(
                    "cell {c} holds {n} point(s); sampling needs at least 2 per cell (N_min >= 2)"
                )));
            }
            let mean = cell.members.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
            let ss: f64 = cell.members.iter().map(|&i| (y[i] - mean).powi(2)).sum();
            Ok(ss / (n - 1) as f64)
        })
        .collect()
}

/// Highest-variance cell not yet visited; lowest index on ties.
pub fn select_start(variances: &[f64], visited: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (c, &v) in variances.iter().enumerate() {
        if visited[c] {
            continue;
        }
        if best.is_none_or(|b| v > variances[b]) {
            best = Some(c);
        }
    }
    best
}

/// Highest-variance unvisited neighbour of the visited set, or a new
/// component's start when the frontier is empty.
pub fn next_cell(visited: &[bool], graph: &PartitionGraph, variances: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for u in (0..visited.len()).filter(|&u| visited[u]) {
        for &c in graph.neighbours(u) {
            if !visited[c]
                && best.is_none_or(|b| variances[c] > variances[b] || (variances[c] == variances[b] && c < b))
            {
                best = Some(c);
            }
        }
    }
    best.or_else(|| select_start(variances, visited))
}

#[derive(PartialEq)]
struct Frontier {
    variance: f64,
    cell: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.variance
            .total_cmp(&other.variance)
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Full visit order; equal to repeated [`next_cell`] calls.
pub fn visit_order(graph: &PartitionGraph, variances: &[f64]) -> Vec<usize> {
    let m = variances.len();
    let mut seeds: Vec<usize> = (0..m).collect();
    seeds.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
    let mut seeds = seeds.into_iter();
    let mut visited = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut heap = BinaryHeap::new();
    while order.len() < m {
        let next = loop {
            match heap.pop() {
                Some(Frontier { cell, .. }) if !visited[cell] => break Some(cell),
                Some(_) => continue,
                None => break None,
            }
        };
        let c = match next {
            Some(c) => c,
            None => seeds.find(|&s| !visited[s]).expect("unvisited cell remains"),
        };
        visited[c] = true;
        order.push(c);
        for &nb in graph.neighbours(c) {
            if !visited[nb] {
                heap.push(Frontier {
                    variance: variances[nb],
                    cell: nb,
                });
            }
        }
    }
    order
}

/// Selection probabilities of a cell's members given the responses already
/// drawn from its neighbours. Uniform when there are none.
pub fn draw_weights(member_y: &[f64], neighbour_draws: &[f64], eta: f64) -> Vec<f64> {
    let scale = 1.0 / (2.0 * eta * eta);
    let logw: Vec<f64> = member_y
        .iter()
        .map(|&yj| -scale * neighbour_draws.iter().map(|&ys| (yj - ys).powi(2)).sum::<f64>())
        .collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

fn pick<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return j;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

/// Position (within `member_y`) of one conditional draw.
pub fn conditional_draw<R: Rng + ?Sized>(member_y: &[f64], neighbour_draws: &[f64], eta: f64, rng: &mut R) -> usize {
    pick(&draw_weights(member_y, neighbour_draws, eta), rng)
}

pub fn draw_subsample(
    part: &Partitioning,
    graph: &PartitionGraph,
    y: &[f64],
    cfg: &SamplerConfig,
    trace: bool,
) -> Result<SubsampleDraw> {
    cfg.validate()?;
    let variances = cell_variances(part, y)?;
    let order = visit_order(graph, &variances);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen = vec![usize::MAX; part.len()];
    let mut steps = trace.then(Vec::new);
    let mut member_y = Vec::new();
    for (step, &c) in order.iter().enumerate() {
        let cell = &part.cells()[c];
        let nbrs: Vec<usize> = graph
            .neighbours(c)
            .iter()
            .copied()
            .filter(|&j| chosen[j] != usize::MAX)
            .collect();
        let drawn: Vec<f64> = nbrs.iter().map(|&j| y[chosen[j]]).collect();
        member_y.clear();
        member_y.extend(cell.members.iter().map(|&i| y[i]));
        let p = draw_weights(&member_y, &drawn, cfg.eta);
        let row = cell.members[pick(&p, &mut rng)];
        chosen[c] = row;
        if let Some(s) = steps.as_mut() {
            s.push(TraceStep {
                step,
                cell_id: c,
                chosen_index: row,
                neighbor_ids: nbrs,
                weight_entropy: entropy(&p),
            });
        }
    }
    Ok(SubsampleDraw {
        chosen,
        order,
        trace: steps,
    })
}
