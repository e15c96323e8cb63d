use serde::{Deserialize, Serialize};

use super::{geometry::closures_adjacent, HyperRect, Partitioning};

/// Undirected graph over cells; an edge joins cells whose closures share
/// more than a single point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionGraph {
    adjacency: Vec<Vec<usize>>,
}

impl PartitionGraph {
    /// Neighbour lists must be symmetric and free of self-loops.
    pub fn from_adjacency(mut adjacency: Vec<Vec<usize>>) -> Self {
        for nb in &mut adjacency {
            nb.sort_unstable();
            nb.dedup();
        }
        debug_assert!(adjacency
            .iter()
            .enumerate()
            .all(|(i, nb)| nb.iter().all(|&j| j != i && adjacency[j].binary_search(&i).is_ok())));
        PartitionGraph { adjacency }
    }

    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); nodes];
        for &(i, j) in edges {
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        PartitionGraph::from_adjacency(adjacency)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Each edge once, as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for (i, nb) in self.adjacency.iter().enumerate() {
            for &j in nb {
                if i < j {
                    e.push((i, j));
                }
            }
        }
        e
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Connected components as sorted node lists, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut nodes = vec![s];
            comp[s] = id;
            let mut k = 0;
            while k < nodes.len() {
                let u = nodes[k];
                k += 1;
                for &v in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        nodes.push(v);
                    }
                }
            }
            nodes.sort_unstable();
            out.push(nodes);
        }
        out
    }
}

/// Neighbour lists computed from geometry alone: cells sorted by their lower
/// bound in dimension 0 and swept, so only pairs overlapping or touching in
/// that dimension are tested.
pub(crate) fn neighbour_lists(cells: &[HyperRect]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| cells[a].lower[0].total_cmp(&cells[b].lower[0]).then(a.cmp(&b)));
    let mut adj = vec![Vec::new(); cells.len()];
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if cells[b].lower[0] > cells[a].upper[0] {
                break;
            }
            if closures_adjacent(&cells[a], &cells[b]) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
    }
    for nb in &mut adj {
        nb.sort_unstable();
    }
    adj
}

/// Graph induced by a finished partitioning, from cell geometry only.
pub fn build_graph(part: &Partitioning) -> PartitionGraph {
    PartitionGraph::from_adjacency(neighbour_lists(part.cells()))
}
