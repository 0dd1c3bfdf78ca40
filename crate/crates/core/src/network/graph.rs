use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::Real;

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Edges are stored as sorted `(min, max)` pairs; self-loops, duplicates
    /// and out-of-range endpoints are rejected.
    pub fn new(nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::param("nodes", "a graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::param("edges", format!("self-loop at node {i}")));
            }
            if i >= nodes || j >= nodes {
                return Err(Error::param("edges", format!("edge ({i}, {j}) out of range for {nodes} nodes")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::param("edges", format!("duplicate edge ({i}, {j})")));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); nodes];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        neighbors.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Self { nodes, edges, neighbors })
    }

    /// Ring `0 − 1 − … − (n−1) − 0`; for `n = 2` the single edge.
    pub fn cycle(nodes: usize) -> Result<Self> {
        match nodes {
            0 | 1 => Err(Error::param("nodes", "a cycle needs at least two nodes")),
            2 => Self::new(2, [(0, 1)]),
            n => Self::new(n, (0..n).map(|i| (i, (i + 1) % n))),
        }
    }

    /// `rows × cols` lattice, node `r·cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    pub fn complete(nodes: usize) -> Result<Self> {
        Self::new(nodes, (0..nodes).flat_map(|i| (i + 1..nodes).map(move |j| (i, j))))
    }

    /// Random graph keeping each possible edge with probability `sparsity`,
    /// redrawn until connected.
    pub fn erdos_renyi(nodes: usize, sparsity: f64, rng: &mut impl Rng) -> Result<Self> {
        const ATTEMPTS: usize = 10_000;
        if !(sparsity > 0.0 && sparsity <= 1.0) {
            return Err(Error::param("sparsity", "must lie in (0, 1]"));
        }
        for _ in 0..ATTEMPTS {
            let mut edges = Vec::new();
            for i in 0..nodes {
                for j in i + 1..nodes {
                    if rng.gen_bool(sparsity) {
                        edges.push((i, j));
                    }
                }
            }
            let g = Self::new(nodes, edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::param("sparsity", format!("no connected graph found in {ATTEMPTS} draws")))
    }

    /// Parses an edge list: one `i j` pair per line, 0-indexed; blank lines and
    /// `#` comments are ignored. The node count is `nodes` or one past the
    /// largest index.
    pub fn parse_edge_list(text: &str, nodes: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => return Err(Error::Data { line: k + 1, reason: format!("expected `i j`, found {raw:?}") }),
            }
        }
        let n = nodes.unwrap_or_else(|| edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
        Self::new(n, edges)
    }

    pub fn read_edge_list(path: impl AsRef<Path>, nodes: Option<usize>) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?, nodes)
    }

    pub fn to_edge_list(&self) -> String {
        self.edges.iter().map(|(i, j)| format!("{i} {j}\n")).collect()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Metropolis-Hastings weights `1/(1 + max(deg_i, deg_j))` on edges, the
    /// remainder on the diagonal.
    pub fn metropolis_matrix<T: Real>(&self) -> Matrix<T> {
        metropolis_of_edges(self.nodes, self.edges.iter().copied())
    }
}

/// Metropolis matrix of the subgraph made of `edges`.
pub(crate) fn metropolis_of_edges<T: Real>(nodes: usize, edges: impl Iterator<Item = (usize, usize)> + Clone) -> Matrix<T> {
    let mut degree = vec![0usize; nodes];
    for (i, j) in edges.clone() {
        degree[i] += 1;
        degree[j] += 1;
    }
    let mut p = Matrix::zeros(nodes, nodes);
    for (i, j) in edges {
        let w = T::one() / T::count(1 + degree[i].max(degree[j]));
        p.set(i, j, w);
        p.set(j, i, w);
    }
    for i in 0..nodes {
        let off: T = p.row(i).iter().copied().sum();
        p.set(i, i, T::one() - off);
    }
    p
}
