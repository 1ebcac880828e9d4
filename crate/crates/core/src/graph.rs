//! Spatial adjacency structure.
//!
//! An [`AdjacencyGraph`] is an undirected neighbourhood system: no node is its
//! own neighbour and adjacency is symmetric. Graphs are immutable once built.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::LabelField;

/// Neighbourhood scheme for square lattices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeScheme {
    /// First-order: up, down, left, right.
    #[default]
    Rook,
    /// Second-order: rook plus the four diagonals.
    Queen,
}

impl FromStr for LatticeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rook" => Ok(LatticeScheme::Rook),
            "queen" => Ok(LatticeScheme::Queen),
            other => Err(Error::invalid(format!("unknown lattice scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Builds a graph from undirected edges. Duplicates and reversed pairs collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        Ok(Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Square lattice of `side × side` nodes in row-major order, truncated at the
    /// border (no wrapping).
    pub fn lattice(side: usize, scheme: LatticeScheme) -> Result<Self> {
        if side < 2 {
            return Err(Error::LatticeTooSmall(side));
        }
        let offsets: &[(isize, isize)] = match scheme {
            LatticeScheme::Rook => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            LatticeScheme::Queen => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        };
        let side_i = side as isize;
        let mut neighbors = Vec::with_capacity(side * side);
        for r in 0..side_i {
            for c in 0..side_i {
                let mut nb: Vec<usize> = offsets
                    .iter()
                    .map(|&(dr, dc)| (r + dr, c + dc))
                    .filter(|&(rr, cc)| rr >= 0 && rr < side_i && cc >= 0 && cc < side_i)
                    .map(|(rr, cc)| (rr * side_i + cc) as usize)
                    .collect();
                nb.sort_unstable();
                neighbors.push(nb);
            }
        }
        Ok(Self { neighbors })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Sorted neighbour list of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges with `i < j`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        i < self.n() && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Parses the edge-list text format: one edge per line as two whitespace
    /// separated 0-based indices, `#` comment lines and blank lines ignored.
    pub fn parse_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = || -> Result<usize> {
                fields
                    .next()
                    .ok_or_else(|| Error::invalid(format!("line {}: expected two indices", lineno + 1)))?
                    .parse::<usize>()
                    .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))
            };
            let i = next()?;
            let j = next()?;
            if fields.next().is_some() {
                return Err(Error::invalid(format!("line {}: trailing fields", lineno + 1)));
            }
            edges.push((i, j));
        }
        Self::from_edges(n, &edges)
    }

    /// Renders the graph in the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# {} nodes\n", self.n());
        for (i, j) in self.edges() {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }
}

/// Per-node, per-component counts of neighbours inside and outside a component.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborCounts {
    k: usize,
    inside: Vec<u32>,
    degree: Vec<u32>,
}

impl NeighborCounts {
    pub fn num_components(&self) -> usize {
        self.k
    }

    /// `n_ik`: neighbours of `i` labelled `k`.
    pub fn inside(&self, i: usize, k: usize) -> u32 {
        self.inside[i * self.k + k]
    }

    /// `n_ik^c`: neighbours of `i` labelled anything but `k`.
    pub fn outside(&self, i: usize, k: usize) -> u32 {
        self.degree[i] - self.inside(i, k)
    }

    /// `n_ik - n_ik^c`.
    pub fn difference(&self, i: usize, k: usize) -> f64 {
        2.0 * self.inside(i, k) as f64 - self.degree[i] as f64
    }
}

/// Counts, for every node and component, how many neighbours carry that label.
pub fn neighbor_counts(graph: &AdjacencyGraph, labels: &LabelField, k: usize) -> Result<NeighborCounts> {
    labels.validate(graph.n(), k)?;
    let n = graph.n();
    let mut inside = vec![0u32; n * k];
    let mut degree = vec![0u32; n];
    for i in 0..n {
        let nb = graph.neighbors(i);
        degree[i] = nb.len() as u32;
        for &j in nb {
            inside[i * k + labels[j]] += 1;
        }
    }
    Ok(NeighborCounts { k, inside, degree })
}

/// `n_ik - n_ik^c` for a single node and all `k` components, written into `out`.
pub(crate) fn neighbor_differences_at(
    graph: &AdjacencyGraph,
    labels: &[usize],
    i: usize,
    out: &mut [f64],
) {
    let nb = graph.neighbors(i);
    out.iter_mut().for_each(|d| *d = -(nb.len() as f64));
    for &j in nb {
        out[labels[j]] += 2.0;
    }
}
