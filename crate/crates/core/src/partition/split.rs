use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::geometry::closures_adjacent;
use super::{HyperRect, Partitioning, Work};
use crate::error::{Error, Result};
use crate::points::Points;

/// Cut position along `p`: left child gets coordinates `< cut`.
///
/// Takes the member median when that leaves both halves with at least
/// `n_min` points; with ties, the nearest distinct-value gap that does.
fn cut_along(cell: &HyperRect, x: &Points, p: usize, n_min: usize) -> Option<f64> {
    let mut v: Vec<f64> = cell.members.iter().map(|&i| x.get(i, p)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mid = n / 2;
    let valid = |k: usize| k >= n_min.max(1) && n - k >= n_min.max(1) && k < n && v[k - 1] < v[k];
    for off in 0..=n {
        let below = mid.checked_sub(off);
        let above = mid + off;
        if below.is_none() && above > n {
            break;
        }
        for k in [below, Some(above)].into_iter().flatten() {
            if !valid(k) {
                continue;
            }
            let mut cut = 0.5 * (v[k - 1] + v[k]);
            if cut <= v[k - 1] {
                cut = v[k];
            }
            if cell.lower[p] < cut && cut < cell.upper[p] {
                return Some(cut);
            }
        }
    }
    None
}

/// Dimension and cut for a split, trying dimensions longest side first.
fn choose_cut(cell: &HyperRect, x: &Points, n_min: usize) -> Option<(usize, f64)> {
    let mut dims: Vec<usize> = (0..cell.dim()).collect();
    dims.sort_by(|&a, &b| cell.side(b).total_cmp(&cell.side(a)).then(a.cmp(&b)));
    dims.into_iter()
        .find_map(|p| cut_along(cell, x, p, n_min).map(|c| (p, c)))
}

fn split_cell(w: &mut Work, t: usize, p: usize, cut: f64, x: &Points) -> usize {
    let parent = w.cells[t].take().expect("live cell");
    let (left_m, right_m): (Vec<usize>, Vec<usize>) = parent.members.iter().partition(|&&i| x.get(i, p) < cut);
    let mut left = HyperRect::new(parent.lower.clone(), parent.upper.clone());
    left.upper[p] = cut;
    left.members = left_m;
    let mut right = HyperRect::new(parent.lower, parent.upper);
    right.lower[p] = cut;
    right.members = right_m;

    let u = w.cells.len();
    let old = std::mem::take(&mut w.adj[t]);
    let mut adj_left = BTreeSet::from([u]);
    let mut adj_right = BTreeSet::from([t]);
    for j in old {
        let nb = w.cells[j].as_ref().expect("neighbour is live");
        w.adj[j].remove(&t);
        if closures_adjacent(&left, nb) {
            adj_left.insert(j);
            w.adj[j].insert(t);
        }
        if closures_adjacent(&right, nb) {
            adj_right.insert(j);
            w.adj[j].insert(u);
        }
    }
    w.adj[t] = adj_left;
    w.adj.push(adj_right);
    w.cells[t] = Some(left);
    w.cells.push(Some(right));
    u
}

/// Split until no cell holds more than `N_max` points.
///
/// The largest cell goes first (lowest index on ties). Cells whose members
/// cannot be separated along any dimension are flagged `oversize` and kept.
pub fn split_pass(part: Partitioning, x: &Points) -> Result<Partitioning> {
    let mut w = Work::from_partitioning(part);
    let (n_min, n_max) = (w.n_min, w.n_max);
    if let Some(c) = w.live().find(|&i| w.count(i) < n_min) {
        return Err(Error::config(format!(
            "split requires every cell to hold at least N_min = {n_min}; cell {c} has {}",
            w.count(c)
        )));
    }
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = w
        .live()
        .filter(|&i| w.count(i) > n_max && !w.cell(i).oversize)
        .map(|i| (w.count(i), Reverse(i)))
        .collect();
    while let Some((_, Reverse(t))) = heap.pop() {
        match choose_cut(w.cell(t), x, n_min) {
            Some((p, cut)) => {
                let u = split_cell(&mut w, t, p, cut, x);
                for c in [t, u] {
                    if w.count(c) > n_max {
                        heap.push((w.count(c), Reverse(c)));
                    }
                }
            }
            None => {
                log::warn!("cell with {} tied points cannot be split; flagged oversize", w.count(t));
                w.cells[t].as_mut().expect("live cell").oversize = true;
            }
        }
    }
    Ok(w.into_partitioning())
}
