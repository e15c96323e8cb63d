use super::{graph, HyperRect, Partitioning};
use crate::error::{Error, Result};
use crate::points::Points;

/// `⌈(2N / (N_min + N_max))^(1/d)⌉` intervals per dimension, which puts the
/// initial cell count near the expected final count.
pub fn default_grid(n: usize, dim: usize, n_min: usize, n_max: usize) -> Vec<usize> {
    let target = 2.0 * n as f64 / (n_min + n_max) as f64;
    let m = target.max(1.0).powf(1.0 / dim as f64).ceil() as usize;
    vec![m.max(1); dim]
}

/// Type-7 empirical quantile of sorted values.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Interior interval boundaries at the empirical quantiles `j/m`,
/// `j = 1..m-1`. Duplicates and values on the domain edge are dropped,
/// so fewer than `m` intervals may result.
pub fn quantile_boundaries(values: &[f64], m: usize) -> Vec<f64> {
    if values.is_empty() || m <= 1 {
        return Vec::new();
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(m - 1);
    for j in 1..m {
        let b = quantile_sorted(&v, j as f64 / m as f64);
        if b > 0.0 && b < 1.0 && out.last().is_none_or(|last| b > *last) {
            out.push(b);
        }
    }
    out
}

fn check_unit_cube(x: &Points) -> Result<()> {
    if let Some(k) = x.as_slice().iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::data(format!(
            "point {} has coordinate {} outside [0,1]",
            k / x.dim(),
            x.as_slice()[k]
        )));
    }
    Ok(())
}

/// Quantile grid with `m_per_dim[p]` intervals along dimension `p` (fewer if
/// heavy ties collapse boundaries). Cells may be empty.
pub fn initialize_grid(x: &Points, m_per_dim: &[usize]) -> Result<Partitioning> {
    if m_per_dim.len() != x.dim() {
        return Err(Error::config(format!(
            "grid has {} entries for {}-dimensional data",
            m_per_dim.len(),
            x.dim()
        )));
    }
    if m_per_dim.contains(&0) {
        return Err(Error::config("grid counts must be at least 1"));
    }
    check_unit_cube(x)?;
    let mut boundaries = Vec::with_capacity(x.dim());
    for (p, &m) in m_per_dim.iter().enumerate() {
        let col: Vec<f64> = x.column(p).collect();
        let b = quantile_boundaries(&col, m);
        if b.len() + 1 < m {
            log::warn!(
                "dimension {p}: tied quantiles reduce the grid from {m} to {} intervals",
                b.len() + 1
            );
        }
        boundaries.push(b);
    }
    Ok(grid_partition(x, &boundaries))
}

/// Uniform grid with equally spaced boundaries; no merging or splitting.
pub fn equal_volume_partition(x: &Points, m_per_dim: &[usize]) -> Result<Partitioning> {
    if m_per_dim.len() != x.dim() || m_per_dim.contains(&0) {
        return Err(Error::config(
            "equal-volume grid needs one positive count per dimension",
        ));
    }
    check_unit_cube(x)?;
    let boundaries: Vec<Vec<f64>> = m_per_dim
        .iter()
        .map(|&m| (1..m).map(|j| j as f64 / m as f64).collect())
        .collect();
    Ok(grid_partition(x, &boundaries))
}

/// Cartesian product of intervals; cell index is row-major with the last
/// dimension varying fastest.
fn grid_partition(x: &Points, boundaries: &[Vec<f64>]) -> Partitioning {
    let d = boundaries.len();
    let counts: Vec<usize> = boundaries.iter().map(|b| b.len() + 1).collect();
    let mut strides = vec![1usize; d];
    for p in (0..d.saturating_sub(1)).rev() {
        strides[p] = strides[p + 1] * counts[p + 1];
    }
    let total: usize = counts.iter().product();
    let edge = |p: usize, j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == counts[p] {
            1.0
        } else {
            boundaries[p][j - 1]
        }
    };

    let mut cells = Vec::with_capacity(total);
    for flat in 0..total {
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for p in 0..d {
            let j = (flat / strides[p]) % counts[p];
            lower.push(edge(p, j));
            upper.push(edge(p, j + 1));
        }
        cells.push(HyperRect::new(lower, upper));
    }
    for (i, row) in x.rows().enumerate() {
        let flat: usize = (0..d)
            .map(|p| boundaries[p].partition_point(|b| *b <= row[p]) * strides[p])
            .sum();
        cells[flat].members.push(i);
    }

    let adjacency = if d <= 8 {
        grid_adjacency(&counts, &strides)
    } else {
        graph::neighbour_lists(&cells)
    };
    Partitioning::from_parts(d, cells, adjacency)
}

/// Grid neighbours: index offsets in `{-1,0,1}^d` touching along at most
/// `d-1` dimensions (closures share more than a corner). In 1D, the two
/// adjacent intervals.
fn grid_adjacency(counts: &[usize], strides: &[usize]) -> Vec<Vec<usize>> {
    let d = counts.len();
    let total: usize = counts.iter().product();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect::<Vec<i64>>()
        })
        .filter(|o| {
            let nz = o.iter().filter(|v| **v != 0).count();
            nz >= 1 && (nz < d || d == 1)
        })
        .collect();
    let mut adj = Vec::with_capacity(total);
    let mut idx = vec![0i64; d];
    for flat in 0..total {
        for p in 0..d {
            idx[p] = ((flat / strides[p]) % counts[p]) as i64;
        }
        let mut nb: Vec<usize> = offsets
            .iter()
            .filter_map(|o| {
                let mut f = 0usize;
                for p in 0..d {
                    let j = idx[p] + o[p];
                    if j < 0 || j >= counts[p] as i64 {
                        return None;
                    }
                    f += j as usize * strides[p];
                }
                Some(f)
            })
            .collect();
        nb.sort_unstable();
        adj.push(nb);
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_median_of_uniform_grid() {
        let v = [0.125, 0.375, 0.625, 0.875];
        assert_eq!(quantile_boundaries(&v, 2), vec![0.5]);
    }

    #[test]
    fn deciles_give_hundred_cells_in_2d() {
        let n = 1000;
        let data: Vec<f64> = (0..n)
            .flat_map(|i| {
                let a = (i as f64 + 0.5) / n as f64;
                [a, (a * 7.31).fract()]
            })
            .collect();
        let x = Points::new(2, data);
        let part = initialize_grid(&x, &[10, 10]).unwrap();
        assert_eq!(part.len(), 100);
        assert_eq!(part.total_members(), n);
        part.check_invariants(&x, false).unwrap();
    }

    #[test]
    fn single_cell_grid() {
        let x = Points::new(3, vec![0.1, 0.2, 0.3, 0.9, 0.8, 0.7]);
        let part = initialize_grid(&x, &[1, 1, 1]).unwrap();
        assert_eq!(part.len(), 1);
        assert_eq!(part.cells()[0].members, vec![0, 1]);
        assert!(part.neighbours(0).is_empty());
    }

    #[test]
    fn heavy_ties_reduce_intervals() {
        let x = Points::new(1, vec![0.3; 50].into_iter().chain([0.9]).collect());
        let part = initialize_grid(&x, &[4]).unwrap();
        assert!(part.len() < 4);
        part.check_invariants(&x, false).unwrap();
    }

    #[test]
    fn default_grid_targets_expected_count() {
        assert_eq!(default_grid(20_000, 1, 50, 150), vec![200]);
        assert_eq!(default_grid(60, 2, 50, 150), vec![1, 1]);
        assert_eq!(default_grid(80_000, 2, 100, 300), vec![20, 20]);
    }

    #[test]
    fn grid_adjacency_2d_counts() {
        // 3×3 grid: centre cell has 4 face neighbours, corner cells have 2
        let adj = grid_adjacency(&[3, 3], &[3, 1]);
        assert_eq!(adj[4], vec![1, 3, 5, 7]);
        assert_eq!(adj[0], vec![1, 3]);
    }

    #[test]
    fn grid_adjacency_matches_geometry_in_3d() {
        let n = 200;
        let data: Vec<f64> = (0..n * 3).map(|k| (k as f64 * 0.618_033_988_75).fract()).collect();
        let x = Points::new(3, data);
        let part = initialize_grid(&x, &[3, 2, 4]).unwrap();
        let geo = graph::neighbour_lists(part.cells());
        for i in 0..part.len() {
            assert_eq!(part.neighbours(i), geo[i].as_slice(), "cell {i}");
        }
    }

    #[test]
    fn equal_volume_point_mass() {
        let x = Points::new(2, vec![0.0; 20]);
        let part = equal_volume_partition(&x, &[3, 3]).unwrap();
        let nonempty: Vec<usize> = part.cells().iter().map(|c| c.len()).filter(|c| *c > 0).collect();
        assert_eq!(nonempty, vec![10]);
        assert_eq!(part.summary().empty, 8);
    }

    #[test]
    fn rejects_points_outside_unit_cube() {
        let x = Points::new(1, vec![0.2, 1.5]);
        assert!(initialize_grid(&x, &[2]).is_err());
    }
}
