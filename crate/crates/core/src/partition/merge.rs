//! Merge stage: grow every box below `N_min` until the minimality condition holds.
//!
//! For a target box the candidate merges are its face neighbours along each
//! of the `2d` (dimension, side) directions. A direction is usable when the
//! bounding box of the target and those neighbours is tiled exactly by the
//! cells it touches (the merged region must stay a box). Among usable
//! directions the one absorbing the fewest points wins, ties going to the
//! smallest longest/shortest side ratio and then to the first direction in
//! `(dimension, lower before upper)` order.

use std::collections::BTreeSet;

use super::geometry::{face_contact, Bounds, Side};
use super::{HyperRect, Partitioning, Work};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct MergePlan {
    /// Cells replaced by the merged box, ascending; includes the target.
    absorbed: Vec<usize>,
    bounds: Bounds,
    cost: usize,
    aspect: f64,
}

impl MergePlan {
    fn beats(&self, other: &MergePlan) -> bool {
        self.cost < other.cost || (self.cost == other.cost && self.aspect < other.aspect)
    }
}

/// Cells meeting the interior of `b`, found by walking neighbours from `start`.
fn cells_meeting(w: &Work, b: &Bounds, start: usize) -> Vec<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for &v in &w.adj[u] {
            if !seen.contains(&v) && b.meets_interior(w.cell(v)) {
                seen.insert(v);
                stack.push(v);
            }
        }
    }
    seen.into_iter().collect()
}

fn plan_for(w: &Work, target: usize, bounds: Bounds, region: Vec<usize>) -> MergePlan {
    let cost = region.iter().filter(|&&j| j != target).map(|&j| w.count(j)).sum();
    let aspect = bounds.aspect_ratio();
    MergePlan {
        absorbed: region,
        bounds,
        cost,
        aspect,
    }
}

/// Face neighbours of `c` grouped by direction, in `(dimension, side)` order.
fn directional_neighbours(w: &Work, c: usize) -> Vec<Vec<usize>> {
    let cell = w.cell(c);
    let mut groups = vec![Vec::new(); 2 * w.dim];
    for &j in &w.adj[c] {
        if let Some((p, side)) = face_contact(cell, w.cell(j)) {
            let k = 2 * p + usize::from(side == Side::Upper);
            groups[k].push(j);
        }
    }
    groups
}

fn best_direction(w: &Work, c: usize) -> Option<MergePlan> {
    let mut best: Option<MergePlan> = None;
    for group in directional_neighbours(w, c) {
        if group.is_empty() {
            continue;
        }
        let mut b = Bounds::of(w.cell(c));
        for &j in &group {
            b.extend(w.cell(j));
        }
        let region = cells_meeting(w, &b, c);
        if region.iter().any(|&j| !b.contains(w.cell(j))) {
            continue;
        }
        let plan = plan_for(w, c, b, region);
        if best.as_ref().is_none_or(|cur| plan.beats(cur)) {
            best = Some(plan);
        }
    }
    best
}

/// Merge with the single face neighbour whose bounding-box closure is cheapest,
/// enlarging the box until every cell it touches lies inside it.
fn fallback(w: &Work, c: usize) -> Option<MergePlan> {
    let mut best: Option<MergePlan> = None;
    for group in directional_neighbours(w, c) {
        for j in group {
            let mut b = Bounds::of(w.cell(c));
            b.extend(w.cell(j));
            let region = loop {
                let region = cells_meeting(w, &b, c);
                let partial: Vec<usize> = region.iter().copied().filter(|&k| !b.contains(w.cell(k))).collect();
                if partial.is_empty() {
                    break region;
                }
                for k in partial {
                    b.extend(w.cell(k));
                }
            };
            let plan = plan_for(w, c, b, region);
            if best.as_ref().is_none_or(|cur| plan.beats(cur)) {
                best = Some(plan);
            }
        }
    }
    best
}

/// Replace the absorbed cells by their union; returns the slot of the new box.
fn apply(w: &mut Work, plan: MergePlan) -> usize {
    let target = plan.absorbed[0];
    let absorbed: BTreeSet<usize> = plan.absorbed.iter().copied().collect();
    let mut members = Vec::new();
    let mut outside = BTreeSet::new();
    for &a in &plan.absorbed {
        let cell = w.cells[a].take().expect("absorbed cell is live");
        members.extend(cell.members);
        for j in std::mem::take(&mut w.adj[a]) {
            if !absorbed.contains(&j) {
                outside.insert(j);
            }
        }
    }
    members.sort_unstable();
    for &j in &outside {
        let nb = &mut w.adj[j];
        for a in &absorbed {
            nb.remove(a);
        }
        nb.insert(target);
    }
    w.adj[target] = outside;
    w.cells[target] = Some(HyperRect {
        lower: plan.bounds.lower,
        upper: plan.bounds.upper,
        members,
        oversize: false,
    });
    target
}

/// Merge until no cell holds fewer than `N_min` points.
///
/// Targets are taken smallest first (lowest index on ties) and merged
/// repeatedly until they reach `N_min`. A target with no usable direction is
/// deferred; if every sub-minimal cell is deferred, the smallest one is merged
/// through [`fallback`].
pub fn merge_pass(part: Partitioning) -> Result<Partitioning> {
    let mut w = Work::from_partitioning(part);
    let n_min = w.n_min;
    loop {
        let mut targets: Vec<usize> = w.live().filter(|&i| w.count(i) < n_min).collect();
        if targets.is_empty() {
            break;
        }
        targets.sort_by_key(|&i| (w.count(i), i));

        let mut merged = false;
        for &c in &targets {
            let Some(plan) = best_direction(&w, c) else {
                continue;
            };
            let mut cur = apply(&mut w, plan);
            while w.count(cur) < n_min {
                match best_direction(&w, cur) {
                    Some(plan) => cur = apply(&mut w, plan),
                    None => break,
                }
            }
            merged = true;
            break;
        }
        if !merged {
            let c = targets[0];
            let plan = fallback(&w, c).ok_or_else(|| {
                Error::config(format!(
                    "cell with {} points has no neighbour to merge with; fewer than N_min = {n_min} points overall?",
                    w.count(c)
                ))
            })?;
            apply(&mut w, plan);
        }
    }
    Ok(w.into_partitioning())
}
